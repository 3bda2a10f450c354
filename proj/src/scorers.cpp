#include "ttaood/scorers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ttaood/error.hpp"

namespace ttaood {
namespace {

void require_logits(std::span<const double> logits) {
  if (logits.size() < 2) throw DataError("logit vector needs at least 2 classes");
  for (const double v : logits) {
    if (!std::isfinite(v)) throw DataError("non-finite logit");
  }
}

void require_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw UsageError("temperature must be > 0");
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

// 1 - max softmax, via expm1 so near-one-hot inputs keep their precision.
double one_minus_max_softmax(std::span<const double> logits) {
  const std::size_t top = argmax(logits);
  const double mx = logits[top];
  double rest = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (c != top) rest += std::exp(logits[c] - mx);
  }
  return -std::expm1(-std::log1p(rest));
}

std::vector<double> scaled(std::span<const double> logits, double temperature) {
  std::vector<double> out(logits.begin(), logits.end());
  for (auto& v : out) v /= temperature;
  return out;
}

}  // namespace

std::string to_string(ScorerId id) {
  switch (id) {
    case ScorerId::Msp: return "msp";
    case ScorerId::Entropy: return "entropy";
    case ScorerId::MaxLogit: return "maxlogit";
    case ScorerId::Energy: return "energy";
    case ScorerId::Odin: return "odin";
    case ScorerId::Mahalanobis: return "mahalanobis";
    case ScorerId::Vim: return "vim";
  }
  return "unknown";
}

ScorerId parse_scorer_id(const std::string& text) {
  for (const auto id : all_scorers()) {
    if (to_string(id) == text) return id;
  }
  throw UsageError("unknown scorer '" + text +
                   "' (expected msp, entropy, maxlogit, energy, odin, mahalanobis or vim)");
}

const std::vector<ScorerId>& all_scorers() {
  static const std::vector<ScorerId> ids = {ScorerId::Msp,    ScorerId::Entropy,     ScorerId::MaxLogit,
                                            ScorerId::Energy, ScorerId::Odin,        ScorerId::Mahalanobis,
                                            ScorerId::Vim};
  return ids;
}

bool requires_fit(ScorerId id) { return id == ScorerId::Mahalanobis || id == ScorerId::Vim; }
bool requires_head(ScorerId id) { return id == ScorerId::Vim; }

double ScorerConfig::effective_temperature() const {
  if (temperature) return *temperature;
  return id == ScorerId::Odin ? kDefaultOdinTemperature : kDefaultEnergyTemperature;
}

int ScorerConfig::effective_subspace_dim(Eigen::Index feature_dim) const {
  return subspace_dim ? *subspace_dim : default_subspace_dim(feature_dim);
}

void ScorerConfig::validate() const {
  require_temperature(effective_temperature());
  if (!(shrinkage >= 0.0) || !std::isfinite(shrinkage)) throw UsageError("shrinkage must be >= 0");
  if (subspace_dim && *subspace_dim < 1) throw UsageError("subspace dim must be >= 1");
}

int default_subspace_dim(Eigen::Index feature_dim) {
  const auto d = std::min<Eigen::Index>(feature_dim / 4, 256);
  return static_cast<int>(std::max<Eigen::Index>(d, 1));
}

double logsumexp(std::span<const double> values) {
  const double mx = values[argmax(values)];
  double sum = 0.0;
  for (const double v : values) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double score_msp(std::span<const double> logits) {
  require_logits(logits);
  return one_minus_max_softmax(logits);
}

double score_entropy(std::span<const double> logits) {
  require_logits(logits);
  const double lse = logsumexp(logits);
  double h = 0.0;
  for (const double v : logits) {
    const double log_p = v - lse;
    const double p = std::exp(log_p);
    if (p > 0.0) h -= p * log_p;
  }
  return h;
}

double score_maxlogit(std::span<const double> logits) {
  require_logits(logits);
  return -logits[argmax(logits)];
}

double score_energy(std::span<const double> logits, double temperature) {
  require_logits(logits);
  require_temperature(temperature);
  const auto z = scaled(logits, temperature);
  return -temperature * logsumexp(z);
}

double score_odin(std::span<const double> logits, double temperature) {
  require_logits(logits);
  require_temperature(temperature);
  const auto z = scaled(logits, temperature);
  return one_minus_max_softmax(z);
}

MahalanobisModel fit_mahalanobis(const FeaturePack& train, double shrinkage) {
  train.validate();
  if (train.split != Split::Train) throw DataError("mahalanobis must be fit on a train split pack");
  if (!(shrinkage >= 0.0) || !std::isfinite(shrinkage)) throw UsageError("shrinkage must be >= 0");

  const Eigen::Index n = train.num_samples();
  const Eigen::Index m = train.feature_dim();
  const Eigen::Index num_classes = train.num_classes();

  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(num_classes, m);
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = train.labels[static_cast<std::size_t>(i)].class_index();
    means.row(c) += train.features.row(i).cast<double>();
    ++counts[static_cast<std::size_t>(c)];
  }
  // Classes with no training samples get no mean; a lone sample cannot define one.
  std::vector<Eigen::Index> present;
  for (Eigen::Index c = 0; c < num_classes; ++c) {
    const auto count = counts[static_cast<std::size_t>(c)];
    if (count == 0) continue;
    if (count < 2) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(count) +
                      " training sample; mahalanobis needs at least 2 per class");
    }
    means.row(c) /= static_cast<double>(count);
    present.push_back(c);
  }

  Eigen::MatrixXd centered(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = train.labels[static_cast<std::size_t>(i)].class_index();
    centered.row(i) = train.features.row(i).cast<double>() - means.row(c);
  }
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  means = means(present, Eigen::all).eval();

  const double trace = cov.trace();
  const double ridge = trace > 0.0 ? shrinkage * trace / static_cast<double>(m) : shrinkage;
  cov.diagonal().array() += ridge;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> spectrum(cov, Eigen::EigenvaluesOnly);
  const double lo = spectrum.eigenvalues().minCoeff();
  const double hi = spectrum.eigenvalues().maxCoeff();
  const double condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || lo <= hi * 1e-13) {
    throw NumericalError("covariance is singular after shrinkage (n=" + std::to_string(n) +
                         ", m=" + std::to_string(m) + ", smallest eigenvalue " + std::to_string(lo) +
                         "); raise the shrinkage epsilon");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("covariance is not positive definite after shrinkage; raise the shrinkage epsilon");
  }
  Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(m, m));
  precision = 0.5 * (precision + precision.transpose()).eval();

  MahalanobisModel model;
  model.class_means = std::move(means);
  model.precision = std::move(precision);
  model.shrinkage = shrinkage;
  model.condition_number = condition;
  return model;
}

double score_mahalanobis(const MahalanobisModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.feature_dim()) {
    throw DataError("dimension mismatch: feature length " + std::to_string(x.size()) +
                    " vs model dim " + std::to_string(model.feature_dim()));
  }
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < model.num_classes(); ++c) {
    const Eigen::VectorXd d = x - model.class_means.row(c).transpose();
    best = std::min(best, d.dot(model.precision * d));
  }
  return std::max(best, 0.0);
}

ViMModel fit_vim(const FeaturePack& train, const ClassifierHead& head, int subspace_dim) {
  train.validate();
  head.validate();
  if (train.split != Split::Train) throw DataError("vim must be fit on a train split pack");
  const Eigen::Index n = train.num_samples();
  const Eigen::Index m = train.feature_dim();
  if (head.feature_dim() != m || head.num_classes() != train.num_classes()) {
    throw DataError("dimension mismatch between head (" + std::to_string(head.num_classes()) + "x" +
                    std::to_string(head.feature_dim()) + ") and train pack (C=" +
                    std::to_string(train.num_classes()) + ", m=" + std::to_string(m) + ")");
  }
  if (subspace_dim < 1 || subspace_dim >= m) {
    throw UsageError("vim subspace dim must satisfy 1 <= D < m (D=" + std::to_string(subspace_dim) +
                     ", m=" + std::to_string(m) + ")");
  }

  const Eigen::MatrixXd w = head.weights.cast<double>();
  const Eigen::VectorXd b = head.bias.cast<double>();
  const Eigen::VectorXd origin = -(w.completeOrthogonalDecomposition().pseudoInverse() * b);

  Eigen::MatrixXd centered = train.features.cast<double>();
  centered.rowwise() -= origin.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of feature covariance failed");
  const Eigen::Index residual_dim = m - subspace_dim;

  ViMModel model;
  model.origin = origin;
  model.subspace_dim = subspace_dim;
  // Eigenvalues come back ascending; the residual space is the leading block.
  model.residual_basis = eig.eigenvectors().leftCols(residual_dim);
  model.eigenvalues = eig.eigenvalues().reverse();

  const double below = eig.eigenvalues()(residual_dim - 1);
  const double above = eig.eigenvalues()(residual_dim);
  const double scale = std::max(std::abs(eig.eigenvalues()(m - 1)), std::numeric_limits<double>::min());
  model.eigen_tie_at_cut = (above - below) <= 1e-10 * scale;

  double residual_sum = 0.0;
  double total_norm = 0.0;
  double maxlogit_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    residual_sum += (model.residual_basis.transpose() * centered.row(i).transpose()).norm();
    total_norm += centered.row(i).norm();
    maxlogit_sum += train.logits.row(i).cast<double>().maxCoeff();
  }
  if (!(residual_sum > 1e-12 * std::max(total_norm, 1.0))) {
    throw NumericalError("residual norms vanish on the train pack: D too large / features rank-deficient");
  }
  model.alpha = maxlogit_sum / residual_sum;
  if (!(model.alpha > 0.0) || !std::isfinite(model.alpha)) {
    throw NumericalError("virtual-logit scale alpha is not positive (mean max logit on train is <= 0)");
  }
  return model;
}

double vim_residual_norm(const ViMModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.feature_dim()) {
    throw DataError("dimension mismatch: feature length " + std::to_string(x.size()) +
                    " vs model dim " + std::to_string(model.feature_dim()));
  }
  return (model.residual_basis.transpose() * (x - model.origin)).norm();
}

double score_vim(const ViMModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                 std::span<const double> logits) {
  require_logits(logits);
  return model.alpha * vim_residual_norm(model, x) - logsumexp(logits);
}

}  // namespace ttaood
