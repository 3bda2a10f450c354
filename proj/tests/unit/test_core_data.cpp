#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "test_support.hpp"
#include "ttaood/archive.hpp"
#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"
#include "ttaood/pack.hpp"
#include "ttaood/score_file.hpp"

using namespace ttaood;
namespace fs = std::filesystem;

namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::vector<char> le_bytes(float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  return {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF), static_cast<char>((u >> 16) & 0xFF),
          static_cast<char>((u >> 24) & 0xFF)};
}

FeaturePack tiny_pack() {
  FeaturePack p;
  p.sample_ids = {"a"};
  p.labels = {Label::id_class(0)};
  p.features.resize(1, 2);
  p.features << 1.0f, 2.0f;
  p.logits.resize(1, 2);
  p.logits << 0.5f, -0.5f;
  p.split = Split::Train;
  return p;
}

}  // namespace

TEST_CASE("little-endian encoding is fixed") {
  const std::vector<float> v{1.0f};
  const auto bytes = binio::encode_f32_le(v);
  REQUIRE(bytes.size() == 4);
  CHECK(static_cast<unsigned char>(bytes[3]) == 0x3F);
  CHECK(static_cast<unsigned char>(bytes[2]) == 0x80);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x00);
  const std::vector<double> d{-2.5, 1e-300, std::numeric_limits<double>::denorm_min()};
  CHECK(binio::decode_f64_le(binio::encode_f64_le(d)) == d);
}

TEST_CASE("features.bin of a 1x2 pack is the two LE floats") {
  testing::TempDir dir;
  write_pack(tiny_pack(), dir / "p");
  auto expected = le_bytes(1.0f);
  const auto two = le_bytes(2.0f);
  expected.insert(expected.end(), two.begin(), two.end());
  CHECK(binio::read_file(dir / "p" / "features.bin") == expected);
  CHECK(binio::read_file(dir / "p" / "logits.bin").size() == 8);
}

TEST_CASE("validation rejects each invariant with a distinct error") {
  auto nan = tiny_pack();
  nan.features(0, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK(error_of([&] { nan.validate(); }).find("non-finite value") != std::string::npos);

  auto inf = tiny_pack();
  inf.logits(0, 0) = std::numeric_limits<float>::infinity();
  CHECK(error_of([&] { inf.validate(); }).find("non-finite value") != std::string::npos);

  FeaturePack empty;
  empty.features.resize(0, 2);
  empty.logits.resize(0, 2);
  CHECK(error_of([&] { empty.validate(); }).find("empty pack") != std::string::npos);

  auto dup = testing::random_pack(1, 3, 2, 2);
  dup.sample_ids[2] = dup.sample_ids[0];
  CHECK(error_of([&] { dup.validate(); }).find("duplicate sample id") != std::string::npos);

  auto mismatch = testing::random_pack(1, 3, 2, 2);
  mismatch.logits.resize(2, 2);
  mismatch.logits.setZero();
  CHECK(error_of([&] { mismatch.validate(); }).find("dimension mismatch") != std::string::npos);

  auto one_class = tiny_pack();
  one_class.logits.resize(1, 1);
  one_class.logits.setZero();
  CHECK(error_of([&] { one_class.validate(); }).find("invalid dimensions") != std::string::npos);

  auto range = tiny_pack();
  range.labels[0] = Label::id_class(2);
  CHECK(error_of([&] { range.validate(); }).find("label out of range") != std::string::npos);

  auto ood_in_train = tiny_pack();
  ood_in_train.labels[0] = Label::ood_tag("POL");
  CHECK(error_of([&] { ood_in_train.validate(); }).find("OOD label") != std::string::npos);
  ood_in_train.split = Split::TestOod;
  CHECK_NOTHROW(ood_in_train.validate());
}

TEST_CASE("write_pack rejects an invalid pack before writing anything") {
  testing::TempDir dir;
  auto bad = tiny_pack();
  bad.features(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(write_pack(bad, dir / "p"), DataError);
  CHECK_FALSE(fs::exists(dir / "p" / "meta.json"));
}

TEST_CASE("pack round-trip 100x512 is bitwise") {
  testing::TempDir dir;
  auto p = testing::random_pack(42, 100, 512, 3);
  p.features(3, 7) = -0.0f;
  p.features(4, 8) = std::numeric_limits<float>::denorm_min();
  p.view = "hflip+jitter(b=0.8:1.2)";
  p.model_id = "resnet18 \"quoted\"";
  write_pack(p, dir / "p");
  const auto q = read_pack(dir / "p");
  CHECK(q == p);
  CHECK(std::memcmp(q.features.data(), p.features.data(), sizeof(float) * 100 * 512) == 0);
  CHECK(std::signbit(q.features(3, 7)));

  const auto ood = testing::random_pack(43, 10, 4, 3, Split::TestOod);
  write_pack(ood, dir / "o");
  const auto r = read_pack(dir / "o");
  CHECK(r == ood);
  CHECK_FALSE(r.labels[0].is_id());
  CHECK(r.labels[1].tag() == "POL");
}

TEST_CASE("read_pack errors") {
  testing::TempDir dir;
  fs::create_directories(dir / "empty");
  CHECK(error_of([&] { read_pack(dir / "empty"); }).find("missing file") != std::string::npos);

  write_pack(tiny_pack(), dir / "p");
  auto bytes = binio::read_file(dir / "p" / "features.bin");
  bytes.pop_back();
  binio::write_file(dir / "p" / "features.bin", bytes);
  CHECK(error_of([&] { read_pack(dir / "p"); }).find("corrupt pack") != std::string::npos);

  write_pack(tiny_pack(), dir / "q");
  binio::write_text(dir / "q" / "meta.json", "{not json");
  CHECK(error_of([&] { read_pack(dir / "q"); }).find("malformed meta") != std::string::npos);
}

TEST_CASE("head sizes, round-trip and corruption") {
  testing::TempDir dir;
  ClassifierHead h;
  h.weights = MatrixF::Random(2, 3);
  h.bias = VectorF::Random(2);
  write_head(h, dir / "h");
  CHECK(binio::read_file(dir / "h" / "head.bin").size() == 32);
  CHECK(read_head(dir / "h") == h);

  Rng rng(5);
  ClassifierHead big;
  big.weights.resize(7, 64);
  big.bias.resize(7);
  for (Eigen::Index i = 0; i < big.weights.size(); ++i) big.weights.data()[i] = static_cast<float>(rng.normal());
  for (Eigen::Index i = 0; i < 7; ++i) big.bias(i) = static_cast<float>(rng.normal());
  write_head(big, dir / "big");
  CHECK(read_head(dir / "big") == big);

  auto bytes = binio::read_file(dir / "h" / "head.bin");
  bytes.resize(28);
  binio::write_file(dir / "h" / "head.bin", bytes);
  CHECK(error_of([&] { read_head(dir / "h"); }).find("corrupt head") != std::string::npos);
}

TEST_CASE("max_logit_deviation checks logits against the head") {
  auto p = testing::random_pack(2, 5, 3, 2);
  ClassifierHead h;
  h.weights = MatrixF::Zero(2, 3);
  h.bias = VectorF::Zero(2);
  p.logits.setZero();
  CHECK(max_logit_deviation(p, h) == 0.0);
  p.logits(1, 1) = 0.25f;
  CHECK(max_logit_deviation(p, h) == 0.25);
  h.weights = MatrixF::Zero(2, 4);
  CHECK_THROWS_AS(max_logit_deviation(p, h), DataError);
}

TEST_CASE("score file round-trip keeps every double bit") {
  testing::TempDir dir;
  ScoreFile s;
  s.scorer_id = "energy";
  s.view = "hflip";
  s.config = {{"temperature", 1.0}};
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    s.sample_ids.push_back(i == 3 ? "has,comma \"q\"" : "id" + std::to_string(i));
    s.scores.push_back(rng.normal() * std::pow(10.0, i % 20 - 10));
  }
  s.scores[0] = 0.1 + 0.2;
  s.scores[1] = -0.0;
  write_score_file(s, dir / "s.csv");
  const auto t = read_score_file(dir / "s.csv");
  CHECK(t == s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(std::bit_cast<std::uint64_t>(t.scores[i]) == std::bit_cast<std::uint64_t>(s.scores[i]));
  }
  const auto sidecar = nlohmann::json::parse(binio::read_text(sidecar_path(dir / "s.csv")));
  CHECK(sidecar.at("orientation") == "ood-positive");
}

TEST_CASE("csv helpers") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(split_csv_line("\"a,\"\"b\"\"\",2") == std::vector<std::string>{"a,\"b\"", "2"});
  CHECK(format_exact(0.1) == "0.1");
  CHECK(std::stod(format_exact(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("archive round-trips for both payloads") {
  testing::TempDir dir;
  auto train = testing::random_pack(11, 200, 8, 3);
  FittedScorerArchive maha;
  maha.scorer = ScorerId::Mahalanobis;
  maha.feature_dim = 8;
  maha.num_classes = 3;
  maha.hyperparameters = {{"shrinkage", 1e-3}};
  maha.payload = fit_mahalanobis(train, 1e-3);
  write_archive(maha, dir / "m");
  CHECK(read_archive(dir / "m") == maha);

  ClassifierHead head;
  head.weights = MatrixF::Random(3, 8);
  head.bias = VectorF::Random(3);
  FittedScorerArchive vim;
  vim.scorer = ScorerId::Vim;
  vim.feature_dim = 8;
  vim.num_classes = 3;
  vim.hyperparameters = {{"subspace_dim", 2}};
  vim.payload = fit_vim(train, head, 2);
  write_archive(vim, dir / "v");
  CHECK(read_archive(dir / "v") == vim);
  CHECK_FALSE(describe_fit(vim).empty());

  auto bytes = binio::read_file(dir / "v" / "residual_basis.bin");
  bytes.resize(bytes.size() - 8);
  binio::write_file(dir / "v" / "residual_basis.bin", bytes);
  CHECK_THROWS_AS(read_archive(dir / "v"), DataError);
}
