#pragma once

// Synthetic feature-space data for desk-scale experiments: Gaussian ID
// clusters, OOD clusters offset from them, a least-squares linear head, and a
// fixed-norm random drift standing in for an augmented view.

#include <cstdint>
#include <string>
#include <vector>

#include "ttaood/pack.hpp"

namespace ttaood {

struct SynthConfig {
  int feature_dim = 32;
  int num_classes = 3;
  int n_per_class = 200;  // per ID class, for each of train / val / test_id
  int n_ood = 500;
  double id_spread = 1.0;     // isotropic std-dev around each ID center
  double ood_offset = 4.0;    // distance of OOD centers from their anchor ID center
  double drift_id = 2.0;
  double drift_ood = 4.0;
  double center_radius = 10.0;
  double target_logit = 10.0;  // least-squares target for the true class
  std::vector<std::string> ood_tags = {"ESO", "POL", "UC", "DLP", "DRM"};
  std::uint64_t seed = 0;
  std::string model_id = "synthetic";

  void validate() const;
};

struct SynthData {
  FeaturePack train;
  FeaturePack val;
  FeaturePack test_id;
  FeaturePack test_ood;
  ClassifierHead head;
};

SynthData generate(const SynthConfig& config);

// Adds to every row a random vector of norm `magnitude` (direction uniform on
// the sphere, drawn per sample id), then recomputes logits through the head.
FeaturePack drifted_view(const FeaturePack& pack, const ClassifierHead& head, double magnitude,
                         std::uint64_t seed);

std::string drift_view_tag(double magnitude);

// Logits for stored float features: W x + b evaluated in double, rounded to float.
MatrixF head_logits(const ClassifierHead& head, const MatrixF& features);

}  // namespace ttaood
