#include "ttaood/archive.hpp"

#include <cstring>
#include <sstream>

#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"

namespace ttaood {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kArchiveFormat = "ttaood-archive";
constexpr int kArchiveVersion = 1;

using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool bitwise_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

class PayloadWriter {
 public:
  PayloadWriter(fs::path dir, json& index) : dir_(std::move(dir)), index_(index) {}

  void matrix(const std::string& name, const Eigen::MatrixXd& m) {
    const RowMajorD rm = m;
    write(name, rm.data(), m.rows(), m.cols());
  }
  void vector(const std::string& name, const Eigen::VectorXd& v) { write(name, v.data(), v.size(), 1); }
  void scalars(const std::string& name, const std::vector<double>& v) {
    write(name, v.data(), static_cast<Eigen::Index>(v.size()), 1);
  }

 private:
  void write(const std::string& name, const double* data, Eigen::Index rows, Eigen::Index cols) {
    const auto file = name + ".bin";
    binio::write_file(dir_ / file, binio::encode_f64_le(std::span<const double>(
                                       data, static_cast<std::size_t>(rows * cols))));
    index_[name] = {{"file", file}, {"rows", rows}, {"cols", cols}};
  }

  fs::path dir_;
  json& index_;
};

class PayloadReader {
 public:
  PayloadReader(fs::path dir, const json& index) : dir_(std::move(dir)), index_(index) {}

  Eigen::MatrixXd matrix(const std::string& name) {
    Eigen::Index rows = 0, cols = 0;
    const auto values = read(name, rows, cols);
    RowMajorD rm(rows, cols);
    std::copy(values.begin(), values.end(), rm.data());
    return rm;
  }
  Eigen::VectorXd vector(const std::string& name) {
    Eigen::Index rows = 0, cols = 0;
    const auto values = read(name, rows, cols);
    Eigen::VectorXd v(rows * cols);
    std::copy(values.begin(), values.end(), v.data());
    return v;
  }
  std::vector<double> scalars(const std::string& name, std::size_t expected) {
    Eigen::Index rows = 0, cols = 0;
    auto values = read(name, rows, cols);
    if (values.size() != expected) throw DataError("corrupt archive: " + name + " has wrong length");
    return values;
  }

 private:
  std::vector<double> read(const std::string& name, Eigen::Index& rows, Eigen::Index& cols) {
    if (!index_.contains(name)) throw DataError("corrupt archive: missing payload '" + name + "'");
    const auto& entry = index_.at(name);
    rows = entry.at("rows").get<Eigen::Index>();
    cols = entry.at("cols").get<Eigen::Index>();
    const auto bytes = binio::read_file(dir_ / entry.at("file").get<std::string>());
    if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double)) {
      throw DataError("corrupt archive: payload '" + name + "' has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(rows * cols * 8));
    }
    return binio::decode_f64_le(bytes);
  }

  fs::path dir_;
  const json& index_;
};

}  // namespace

bool operator==(const FittedScorerArchive& a, const FittedScorerArchive& b) {
  if (a.scorer != b.scorer || a.feature_dim != b.feature_dim || a.num_classes != b.num_classes ||
      a.hyperparameters != b.hyperparameters || a.payload.index() != b.payload.index()) {
    return false;
  }
  if (const auto* ma = std::get_if<MahalanobisModel>(&a.payload)) {
    const auto& mb = std::get<MahalanobisModel>(b.payload);
    return bitwise_equal(ma->class_means, mb.class_means) && bitwise_equal(ma->precision, mb.precision) &&
           bitwise_equal(ma->shrinkage, mb.shrinkage) &&
           bitwise_equal(ma->condition_number, mb.condition_number);
  }
  const auto& va = std::get<ViMModel>(a.payload);
  const auto& vb = std::get<ViMModel>(b.payload);
  return bitwise_equal(va.origin, vb.origin) && bitwise_equal(va.residual_basis, vb.residual_basis) &&
         bitwise_equal(va.alpha, vb.alpha) && va.subspace_dim == vb.subspace_dim &&
         bitwise_equal(va.eigenvalues, vb.eigenvalues) && va.eigen_tie_at_cut == vb.eigen_tie_at_cut;
}

void write_archive(const FittedScorerArchive& archive, const fs::path& dir) {
  fs::create_directories(dir);
  json meta;
  meta["format"] = kArchiveFormat;
  meta["version"] = kArchiveVersion;
  meta["scorer_id"] = to_string(archive.scorer);
  meta["feature_dim"] = archive.feature_dim;
  meta["num_classes"] = archive.num_classes;
  meta["hyperparameters"] = archive.hyperparameters;
  json payloads = json::object();
  PayloadWriter writer(dir, payloads);

  if (const auto* maha = std::get_if<MahalanobisModel>(&archive.payload)) {
    writer.matrix("class_means", maha->class_means);
    writer.matrix("precision", maha->precision);
    writer.scalars("scalars", {maha->shrinkage, maha->condition_number});
    meta["diagnostics"] = {{"condition_number", maha->condition_number}};
  } else {
    const auto& vim = std::get<ViMModel>(archive.payload);
    writer.vector("origin", vim.origin);
    writer.matrix("residual_basis", vim.residual_basis);
    writer.vector("eigenvalues", vim.eigenvalues);
    writer.scalars("scalars", {vim.alpha, static_cast<double>(vim.subspace_dim),
                               vim.eigen_tie_at_cut ? 1.0 : 0.0});
    meta["diagnostics"] = {{"alpha", vim.alpha}, {"eigen_tie_at_cut", vim.eigen_tie_at_cut}};
  }
  meta["payloads"] = std::move(payloads);
  binio::write_text(dir / "archive.json", meta.dump(1) + "\n");
}

FittedScorerArchive read_archive(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "archive.json")) {
    throw DataError("missing file: " + (dir / "archive.json").string());
  }
  FittedScorerArchive archive;
  try {
    const json meta = json::parse(binio::read_text(dir / "archive.json"));
    if (meta.at("format").get<std::string>() != kArchiveFormat) {
      throw DataError("malformed archive meta: unexpected format tag");
    }
    archive.scorer = parse_scorer_id(meta.at("scorer_id").get<std::string>());
    archive.feature_dim = meta.at("feature_dim").get<Eigen::Index>();
    archive.num_classes = meta.at("num_classes").get<Eigen::Index>();
    archive.hyperparameters = meta.at("hyperparameters");
    PayloadReader reader(dir, meta.at("payloads"));

    if (archive.scorer == ScorerId::Mahalanobis) {
      MahalanobisModel model;
      model.class_means = reader.matrix("class_means");
      model.precision = reader.matrix("precision");
      const auto s = reader.scalars("scalars", 2);
      model.shrinkage = s[0];
      model.condition_number = s[1];
      archive.payload = std::move(model);
    } else if (archive.scorer == ScorerId::Vim) {
      ViMModel model;
      model.origin = reader.vector("origin");
      model.residual_basis = reader.matrix("residual_basis");
      model.eigenvalues = reader.vector("eigenvalues");
      const auto s = reader.scalars("scalars", 3);
      model.alpha = s[0];
      model.subspace_dim = static_cast<int>(s[1]);
      model.eigen_tie_at_cut = s[2] != 0.0;
      archive.payload = std::move(model);
    } else {
      throw DataError("archive scorer '" + to_string(archive.scorer) + "' is not a fitted scorer");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed archive meta: ") + e.what());
  }
  return archive;
}

std::string describe_fit(const FittedScorerArchive& archive) {
  std::ostringstream out;
  out.precision(6);
  out << "scorer " << to_string(archive.scorer) << ": m=" << archive.feature_dim
      << ", C=" << archive.num_classes << "\n";
  if (const auto* maha = std::get_if<MahalanobisModel>(&archive.payload)) {
    out << "  shrinkage epsilon " << maha->shrinkage << "\n";
    out << "  condition number of shrunk covariance " << maha->condition_number << "\n";
  } else {
    const auto& vim = std::get<ViMModel>(archive.payload);
    const auto& ev = vim.eigenvalues;
    const auto d = static_cast<Eigen::Index>(vim.subspace_dim);
    const double total = ev.sum();
    const double kept = ev.head(d).sum();
    out << "  principal subspace D=" << d << " of m=" << ev.size() << "\n";
    out << "  eigenvalues: largest " << ev(0) << ", at cut " << ev(d - 1) << " | " << ev(d)
        << ", smallest " << ev(ev.size() - 1) << "\n";
    out << "  variance explained by principal subspace " << (total > 0 ? kept / total : 0.0) << "\n";
    out << "  alpha " << vim.alpha << "\n";
    if (vim.eigen_tie_at_cut) out << "  warning: eigenvalue tie at the subspace cut\n";
  }
  return out.str();
}

}  // namespace ttaood
