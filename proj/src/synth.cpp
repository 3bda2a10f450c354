#include "ttaood/synth.hpp"

#include <Eigen/QR>
#include <cmath>
#include <cstdio>

#include "ttaood/error.hpp"
#include "ttaood/rng.hpp"
#include "ttaood/score_file.hpp"

namespace ttaood {
namespace {

// Stream keys keep each split's draws independent of the others' sizes.
enum Stream : std::uint64_t { kCenters = 1, kTrain, kVal, kTestId, kTestOod };

Eigen::VectorXd random_unit(Rng& rng, Eigen::Index dim) {
  Eigen::VectorXd v(dim);
  do {
    for (Eigen::Index j = 0; j < dim; ++j) v(j) = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

std::string sample_name(const char* prefix, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s-%06d", prefix, index);
  return buf;
}

FeaturePack id_split(const SynthConfig& cfg, const Eigen::MatrixXd& centers, Split split,
                     std::uint64_t stream, const char* prefix) {
  Rng rng(mix_seed(cfg.seed, stream));
  const int n = cfg.n_per_class * cfg.num_classes;
  FeaturePack pack;
  pack.split = split;
  pack.model_id = cfg.model_id;
  pack.features.resize(n, cfg.feature_dim);
  int row = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int k = 0; k < cfg.n_per_class; ++k, ++row) {
      for (int j = 0; j < cfg.feature_dim; ++j) {
        pack.features(row, j) = static_cast<float>(centers(c, j) + cfg.id_spread * rng.normal());
      }
      pack.sample_ids.push_back(sample_name(prefix, row));
      pack.labels.push_back(Label::id_class(c));
    }
  }
  return pack;
}

// No intercept: one-hot targets have a constant row sum, so an intercept would
// absorb it and leave W nearly rank C-1, which makes pinv(W) b (the ViM origin)
// explode. Bias stays zero.
ClassifierHead least_squares_head(const SynthConfig& cfg, const FeaturePack& train) {
  const Eigen::Index n = train.num_samples();
  const Eigen::MatrixXd design = train.features.cast<double>();
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(n, cfg.num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    targets(i, train.labels[static_cast<std::size_t>(i)].class_index()) = cfg.target_logit;
  }
  // Minimum-norm solution, so a rank-deficient design (zero spread) still works.
  const Eigen::MatrixXd coef = design.completeOrthogonalDecomposition().solve(targets);
  ClassifierHead head;
  head.weights = coef.transpose().cast<float>();
  head.bias = Eigen::VectorXf::Zero(cfg.num_classes);
  return head;
}

}  // namespace

void SynthConfig::validate() const {
  if (feature_dim < 1 || num_classes < 2 || n_per_class < 1 || n_ood < 1) {
    throw UsageError("synth counts must be >= 1 (and at least 2 classes)");
  }
  for (const double v : {id_spread, ood_offset, drift_id, drift_ood, center_radius}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("synth spreads, offsets and drifts must be >= 0");
  }
  if (!std::isfinite(target_logit)) throw UsageError("synth target logit must be finite");
  if (ood_tags.empty()) throw UsageError("synth needs at least one OOD tag");
}

MatrixF head_logits(const ClassifierHead& head, const MatrixF& features) {
  const Eigen::MatrixXd w = head.weights.cast<double>();
  const Eigen::VectorXd b = head.bias.cast<double>();
  MatrixF out(features.rows(), head.num_classes());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd z = w * features.row(i).transpose().cast<double>() + b;
    out.row(i) = z.transpose().cast<float>();
  }
  return out;
}

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng center_rng(mix_seed(cfg.seed, kCenters));
  Eigen::MatrixXd centers(cfg.num_classes, cfg.feature_dim);
  for (int c = 0; c < cfg.num_classes; ++c) {
    centers.row(c) = cfg.center_radius * random_unit(center_rng, cfg.feature_dim).transpose();
  }
  const auto clusters = static_cast<int>(cfg.ood_tags.size());
  Eigen::MatrixXd ood_centers(clusters, cfg.feature_dim);
  for (int k = 0; k < clusters; ++k) {
    ood_centers.row(k) = centers.row(k % cfg.num_classes) +
                         cfg.ood_offset * random_unit(center_rng, cfg.feature_dim).transpose();
  }

  SynthData data;
  data.train = id_split(cfg, centers, Split::Train, kTrain, "train");
  data.val = id_split(cfg, centers, Split::Val, kVal, "val");
  data.test_id = id_split(cfg, centers, Split::TestId, kTestId, "id");

  Rng ood_rng(mix_seed(cfg.seed, kTestOod));
  auto& ood = data.test_ood;
  ood.split = Split::TestOod;
  ood.model_id = cfg.model_id;
  ood.features.resize(cfg.n_ood, cfg.feature_dim);
  for (int i = 0; i < cfg.n_ood; ++i) {
    const int k = i % clusters;
    for (int j = 0; j < cfg.feature_dim; ++j) {
      ood.features(i, j) = static_cast<float>(ood_centers(k, j) + cfg.id_spread * ood_rng.normal());
    }
    ood.sample_ids.push_back(sample_name("ood", i));
    ood.labels.push_back(Label::ood_tag(cfg.ood_tags[static_cast<std::size_t>(k)]));
  }

  data.head = least_squares_head(cfg, data.train);
  for (auto* pack : {&data.train, &data.val, &data.test_id, &data.test_ood}) {
    pack->logits = head_logits(data.head, pack->features);
    pack->view = "none";
    pack->validate();
  }
  return data;
}

std::string drift_view_tag(double magnitude) {
  return "synthetic-drift(d=" + format_exact(magnitude) + ")";
}

FeaturePack drifted_view(const FeaturePack& pack, const ClassifierHead& head, double magnitude,
                         std::uint64_t seed) {
  pack.validate();
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) throw UsageError("drift magnitude must be >= 0");
  FeaturePack out = pack;
  if (magnitude > 0.0) {
    for (Eigen::Index i = 0; i < pack.num_samples(); ++i) {
      Rng rng(mix_seed(seed, hash_string(pack.sample_ids[static_cast<std::size_t>(i)])));
      const Eigen::VectorXd step = magnitude * random_unit(rng, pack.feature_dim());
      out.features.row(i) = (pack.features.row(i).cast<double>() + step.transpose()).cast<float>();
    }
    out.logits = head_logits(head, out.features);
  }
  out.view = drift_view_tag(magnitude);
  out.validate();
  return out;
}

}  // namespace ttaood
