#pragma once

#include <json.hpp>
#include <optional>

#include "ttaood/archive.hpp"
#include "ttaood/pack.hpp"
#include "ttaood/score_file.hpp"
#include "ttaood/scorers.hpp"

namespace ttaood {

// Fits mahalanobis or vim. vim needs the classifier head.
FittedScorerArchive fit_scorer(const ScorerConfig& config, const FeaturePack& train,
                               const ClassifierHead* head);

// Scores every row of the pack, preserving order. Output is bitwise identical
// for any job count.
ScoreFile score_pack(const ScorerConfig& config, const FeaturePack& pack,
                     const FittedScorerArchive* fitted, int jobs = 1);

// All effective hyperparameters, defaults resolved, for report metadata.
nlohmann::json config_echo(const ScorerConfig& config, std::optional<Eigen::Index> feature_dim = {});

// Accepts "msp" or {"id": "energy", "temperature": 1, ...}.
ScorerConfig scorer_config_from_json(const nlohmann::json& j);

}  // namespace ttaood
