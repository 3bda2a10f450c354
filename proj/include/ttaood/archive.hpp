#pragma once

// Persisted state of a fitted feature-based scorer.
//
// Directory layout:
//   archive.json   scorer id, dims, hyperparameters, diagnostics, payload index
//   *.bin          little-endian float64 payloads, row-major, no header

#include <filesystem>
#include <json.hpp>
#include <string>
#include <variant>

#include "ttaood/scorers.hpp"

namespace ttaood {

struct FittedScorerArchive {
  ScorerId scorer = ScorerId::Mahalanobis;
  Eigen::Index feature_dim = 0;
  Eigen::Index num_classes = 0;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::variant<MahalanobisModel, ViMModel> payload;

  const MahalanobisModel& mahalanobis() const { return std::get<MahalanobisModel>(payload); }
  const ViMModel& vim() const { return std::get<ViMModel>(payload); }

  friend bool operator==(const FittedScorerArchive& a, const FittedScorerArchive& b);
};

void write_archive(const FittedScorerArchive& archive, const std::filesystem::path& dir);
FittedScorerArchive read_archive(const std::filesystem::path& dir);

// Human-readable fit diagnostics: condition number for mahalanobis, an
// eigen-spectrum summary for vim.
std::string describe_fit(const FittedScorerArchive& archive);

}  // namespace ttaood
