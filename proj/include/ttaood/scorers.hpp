#pragma once

// OOD scoring methods. Every score is oriented OOD-positive: a larger value
// means "more out-of-distribution", so a single rule (score >= threshold is
// OOD) applies to all of them.
//
//   msp          1 - max softmax probability
//   entropy      Shannon entropy of the softmax (nats)
//   maxlogit     -max logit
//   energy      -T * logsumexp(logits / T)
//   odin         1 - max softmax(logits / T), temperature scaling only
//   mahalanobis  min over classes of the squared Mahalanobis distance
//   vim          alpha * |residual| - logsumexp(logits)
//
// All arithmetic is double precision regardless of how features were stored.

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttaood/pack.hpp"

namespace ttaood {

enum class ScorerId { Msp, Entropy, MaxLogit, Energy, Odin, Mahalanobis, Vim };

std::string to_string(ScorerId id);
ScorerId parse_scorer_id(const std::string& text);
const std::vector<ScorerId>& all_scorers();

// Feature-based scorers need a fitted model before scoring.
bool requires_fit(ScorerId id);
bool requires_head(ScorerId id);

inline constexpr double kDefaultEnergyTemperature = 1.0;
inline constexpr double kDefaultOdinTemperature = 1000.0;
inline constexpr double kDefaultShrinkage = 1e-3;

struct ScorerConfig {
  ScorerId id = ScorerId::Msp;
  std::optional<double> temperature;   // energy, odin
  double shrinkage = kDefaultShrinkage;  // mahalanobis
  std::optional<int> subspace_dim;     // vim; defaults from the feature dim

  explicit ScorerConfig(ScorerId scorer = ScorerId::Msp) : id(scorer) {}

  double effective_temperature() const;
  int effective_subspace_dim(Eigen::Index feature_dim) const;
  void validate() const;
};

// ViM principal-subspace size when none is given: floor(m / 4) capped at 256, at least 1.
int default_subspace_dim(Eigen::Index feature_dim);

double logsumexp(std::span<const double> values);

double score_msp(std::span<const double> logits);
double score_entropy(std::span<const double> logits);
double score_maxlogit(std::span<const double> logits);
double score_energy(std::span<const double> logits, double temperature = kDefaultEnergyTemperature);
double score_odin(std::span<const double> logits, double temperature = kDefaultOdinTemperature);

struct MahalanobisModel {
  Eigen::MatrixXd class_means;  // one row per class present in the train pack
  Eigen::MatrixXd precision;    // m x m, inverse of the shrunk shared covariance
  double shrinkage = kDefaultShrinkage;
  double condition_number = 0.0;  // of the shrunk covariance

  Eigen::Index feature_dim() const { return precision.rows(); }
  Eigen::Index num_classes() const { return class_means.rows(); }
};

// Shared covariance with 1/n normalization over the classes present in train, ridge shrinkage * trace / m.
// A zero-trace covariance (all samples at their class means) uses the
// shrinkage itself as the ridge.
MahalanobisModel fit_mahalanobis(const FeaturePack& train, double shrinkage = kDefaultShrinkage);

double score_mahalanobis(const MahalanobisModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

struct ViMModel {
  Eigen::VectorXd origin;          // u = -pinv(W) b
  Eigen::MatrixXd residual_basis;  // m x (m - D), orthonormal columns
  double alpha = 1.0;
  int subspace_dim = 1;
  Eigen::VectorXd eigenvalues;  // covariance spectrum, descending (diagnostics)
  bool eigen_tie_at_cut = false;

  Eigen::Index feature_dim() const { return origin.size(); }
};

ViMModel fit_vim(const FeaturePack& train, const ClassifierHead& head, int subspace_dim);

// Virtual logit ||R^T (x - u)|| before scaling.
double vim_residual_norm(const ViMModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

double score_vim(const ViMModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                 std::span<const double> logits);

}  // namespace ttaood
