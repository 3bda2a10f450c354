#pragma once

// Feature packs and classifier heads: the on-disk contract between feature
// extraction and everything downstream.
//
// A pack directory holds
//   meta.json     metadata, sample ids and labels
//   features.bin  n x m little-endian float32, row-major, no header
//   logits.bin    n x C little-endian float32, row-major, no header
//
// A head directory holds head.json (dims) and head.bin (W row-major, then b).

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ttaood {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;

enum class Split { Train, Val, TestId, TestOod };

std::string to_string(Split split);
Split parse_split(const std::string& text);

// Either an ID class index or a free-form OOD class tag (e.g. "POL").
class Label {
 public:
  static Label id_class(int index) { return Label(index); }
  static Label ood_tag(std::string tag) { return Label(std::move(tag)); }

  bool is_id() const { return std::holds_alternative<int>(value_); }
  int class_index() const { return std::get<int>(value_); }
  const std::string& tag() const { return std::get<std::string>(value_); }

  // Class index rendered as decimal for ID labels, the tag otherwise.
  std::string to_string() const;

  friend bool operator==(const Label&, const Label&) = default;

 private:
  explicit Label(int index) : value_(index) {}
  explicit Label(std::string tag) : value_(std::move(tag)) {}
  std::variant<int, std::string> value_;
};

struct FeaturePack {
  std::vector<std::string> sample_ids;
  std::vector<Label> labels;
  MatrixF features;  // n x m
  MatrixF logits;    // n x C
  std::string view = "none";
  Split split = Split::TestId;
  std::string model_id;

  Eigen::Index num_samples() const { return features.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }
  Eigen::Index num_classes() const { return logits.cols(); }

  // Throws DataError naming the first violated invariant.
  void validate() const;

  friend bool operator==(const FeaturePack& a, const FeaturePack& b);
};

struct ClassifierHead {
  MatrixF weights;  // C x m, row c produces logit c
  VectorF bias;     // C

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index feature_dim() const { return weights.cols(); }

  void validate() const;

  friend bool operator==(const ClassifierHead& a, const ClassifierHead& b);
};

void write_pack(const FeaturePack& pack, const std::filesystem::path& dir);
FeaturePack read_pack(const std::filesystem::path& dir);

void write_head(const ClassifierHead& head, const std::filesystem::path& dir);
ClassifierHead read_head(const std::filesystem::path& dir);

// Largest |stored logit - (W x + b)| over the pack, evaluated in double.
// Throws DataError when head and pack dimensions disagree.
double max_logit_deviation(const FeaturePack& pack, const ClassifierHead& head);

}  // namespace ttaood
