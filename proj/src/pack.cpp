#include "ttaood/pack.hpp"

#include <cmath>
#include <cstring>
#include <json.hpp>
#include <unordered_set>

#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"

namespace ttaood {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPackFormat = "ttaood-pack";
constexpr const char* kHeadFormat = "ttaood-head";
constexpr int kFormatVersion = 1;

bool bitwise_equal(const MatrixF& a, const MatrixF& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

bool bitwise_equal(const VectorF& a, const VectorF& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

void require_finite(const float* data, Eigen::Index count, const std::string& what) {
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!std::isfinite(data[i])) {
      throw DataError("non-finite value in " + what + " at flat index " + std::to_string(i));
    }
  }
}

std::vector<char> matrix_bytes(const MatrixF& m) {
  return binio::encode_f32_le(std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

MatrixF load_matrix(const fs::path& file, Eigen::Index rows, Eigen::Index cols) {
  const auto bytes = binio::read_file(file);
  const auto expected = static_cast<std::size_t>(rows * cols) * sizeof(float);
  if (bytes.size() != expected) {
    throw DataError("corrupt pack: " + file.filename().string() + " has " +
                    std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
  }
  const auto values = binio::decode_f32_le(bytes);
  MatrixF m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

json label_to_json(const Label& label) {
  if (label.is_id()) return label.class_index();
  return label.tag();
}

Label label_from_json(const json& j) {
  if (j.is_number_integer()) return Label::id_class(j.get<int>());
  if (j.is_string()) return Label::ood_tag(j.get<std::string>());
  throw DataError("malformed meta: label must be an integer class index or a string tag");
}

void require_file(const fs::path& file) {
  if (!fs::is_regular_file(file)) throw DataError("missing file: " + file.string());
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::TestId: return "test_id";
    case Split::TestOod: return "test_ood";
  }
  return "unknown";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test_id") return Split::TestId;
  if (text == "test_ood") return Split::TestOod;
  throw DataError("unknown split '" + text + "'");
}

std::string Label::to_string() const {
  return is_id() ? std::to_string(class_index()) : tag();
}

void FeaturePack::validate() const {
  const auto n = features.rows();
  if (n < 1) throw DataError("empty pack: at least one sample is required");
  if (logits.rows() != n || static_cast<Eigen::Index>(sample_ids.size()) != n ||
      static_cast<Eigen::Index>(labels.size()) != n) {
    throw DataError("dimension mismatch: features has " + std::to_string(n) + " rows, logits " +
                    std::to_string(logits.rows()) + ", sample_ids " +
                    std::to_string(sample_ids.size()) + ", labels " + std::to_string(labels.size()));
  }
  if (features.cols() < 1) throw DataError("invalid dimensions: feature dim must be >= 1");
  if (logits.cols() < 2) throw DataError("invalid dimensions: class count must be >= 2");
  require_finite(features.data(), features.size(), "features");
  require_finite(logits.data(), logits.size(), "logits");

  std::unordered_set<std::string> seen;
  seen.reserve(sample_ids.size());
  for (const auto& id : sample_ids) {
    if (!seen.insert(id).second) throw DataError("duplicate sample id '" + id + "'");
  }
  for (const auto& label : labels) {
    if (label.is_id()) {
      if (label.class_index() < 0 || label.class_index() >= logits.cols()) {
        throw DataError("label out of range: class index " + std::to_string(label.class_index()));
      }
    } else if (split == Split::Train || split == Split::Val) {
      throw DataError("OOD label '" + label.tag() + "' in " + ttaood::to_string(split) + " split");
    }
  }
}

bool operator==(const FeaturePack& a, const FeaturePack& b) {
  return a.sample_ids == b.sample_ids && a.labels == b.labels && a.view == b.view &&
         a.split == b.split && a.model_id == b.model_id && bitwise_equal(a.features, b.features) &&
         bitwise_equal(a.logits, b.logits);
}

void ClassifierHead::validate() const {
  if (weights.rows() < 2 || weights.cols() < 1) {
    throw DataError("invalid dimensions: head needs C >= 2 rows and m >= 1 columns");
  }
  if (bias.size() != weights.rows()) {
    throw DataError("dimension mismatch: bias length " + std::to_string(bias.size()) +
                    " vs class count " + std::to_string(weights.rows()));
  }
  require_finite(weights.data(), weights.size(), "head weights");
  require_finite(bias.data(), bias.size(), "head bias");
}

bool operator==(const ClassifierHead& a, const ClassifierHead& b) {
  return bitwise_equal(a.weights, b.weights) && bitwise_equal(a.bias, b.bias);
}

void write_pack(const FeaturePack& pack, const fs::path& dir) {
  pack.validate();
  fs::create_directories(dir);

  json meta;
  meta["format"] = kPackFormat;
  meta["version"] = kFormatVersion;
  meta["n"] = pack.num_samples();
  meta["feature_dim"] = pack.feature_dim();
  meta["num_classes"] = pack.num_classes();
  meta["split"] = to_string(pack.split);
  meta["view"] = pack.view;
  meta["model_id"] = pack.model_id;
  meta["sample_ids"] = pack.sample_ids;
  json labels = json::array();
  for (const auto& label : pack.labels) labels.push_back(label_to_json(label));
  meta["labels"] = std::move(labels);

  binio::write_text(dir / "meta.json", meta.dump(1) + "\n");
  binio::write_file(dir / "features.bin", matrix_bytes(pack.features));
  binio::write_file(dir / "logits.bin", matrix_bytes(pack.logits));
}

FeaturePack read_pack(const fs::path& dir) {
  for (const char* name : {"meta.json", "features.bin", "logits.bin"}) require_file(dir / name);

  FeaturePack pack;
  Eigen::Index n = 0, m = 0, c = 0;
  try {
    const json meta = json::parse(binio::read_text(dir / "meta.json"));
    if (meta.at("format").get<std::string>() != kPackFormat) {
      throw DataError("malformed meta: unexpected format tag");
    }
    n = meta.at("n").get<Eigen::Index>();
    m = meta.at("feature_dim").get<Eigen::Index>();
    c = meta.at("num_classes").get<Eigen::Index>();
    if (n < 0 || m < 0 || c < 0) throw DataError("malformed meta: negative dimension");
    pack.split = parse_split(meta.at("split").get<std::string>());
    pack.view = meta.at("view").get<std::string>();
    pack.model_id = meta.at("model_id").get<std::string>();
    pack.sample_ids = meta.at("sample_ids").get<std::vector<std::string>>();
    for (const auto& l : meta.at("labels")) pack.labels.push_back(label_from_json(l));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed meta: ") + e.what());
  }

  pack.features = load_matrix(dir / "features.bin", n, m);
  pack.logits = load_matrix(dir / "logits.bin", n, c);
  pack.validate();
  return pack;
}

void write_head(const ClassifierHead& head, const fs::path& dir) {
  head.validate();
  fs::create_directories(dir);
  json meta{{"format", kHeadFormat},
            {"version", kFormatVersion},
            {"num_classes", head.num_classes()},
            {"feature_dim", head.feature_dim()}};
  binio::write_text(dir / "head.json", meta.dump(1) + "\n");

  auto bytes = matrix_bytes(head.weights);
  const auto bias = binio::encode_f32_le(
      std::span<const float>(head.bias.data(), static_cast<std::size_t>(head.bias.size())));
  bytes.insert(bytes.end(), bias.begin(), bias.end());
  binio::write_file(dir / "head.bin", bytes);
}

ClassifierHead read_head(const fs::path& dir) {
  require_file(dir / "head.json");
  require_file(dir / "head.bin");
  Eigen::Index c = 0, m = 0;
  try {
    const json meta = json::parse(binio::read_text(dir / "head.json"));
    c = meta.at("num_classes").get<Eigen::Index>();
    m = meta.at("feature_dim").get<Eigen::Index>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed head meta: ") + e.what());
  }
  if (c < 2 || m < 1) throw DataError("malformed head meta: need num_classes >= 2, feature_dim >= 1");

  const auto bytes = binio::read_file(dir / "head.bin");
  const auto expected = static_cast<std::size_t>(c * m + c) * sizeof(float);
  if (bytes.size() != expected) {
    throw DataError("corrupt head: head.bin has " + std::to_string(bytes.size()) +
                    " bytes, expected " + std::to_string(expected) + " for C=" +
                    std::to_string(c) + ", m=" + std::to_string(m));
  }
  const auto values = binio::decode_f32_le(bytes);
  ClassifierHead head;
  head.weights.resize(c, m);
  std::copy(values.begin(), values.begin() + c * m, head.weights.data());
  head.bias.resize(c);
  std::copy(values.begin() + c * m, values.end(), head.bias.data());
  head.validate();
  return head;
}

double max_logit_deviation(const FeaturePack& pack, const ClassifierHead& head) {
  if (head.feature_dim() != pack.feature_dim() || head.num_classes() != pack.num_classes()) {
    throw DataError("dimension mismatch: head is " + std::to_string(head.num_classes()) + "x" +
                    std::to_string(head.feature_dim()) + ", pack has C=" +
                    std::to_string(pack.num_classes()) + ", m=" + std::to_string(pack.feature_dim()));
  }
  const Eigen::MatrixXd w = head.weights.cast<double>();
  const Eigen::VectorXd b = head.bias.cast<double>();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pack.num_samples(); ++i) {
    const Eigen::VectorXd expected = w * pack.features.row(i).transpose().cast<double>() + b;
    const Eigen::VectorXd stored = pack.logits.row(i).transpose().cast<double>();
    worst = std::max(worst, (expected - stored).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace ttaood
