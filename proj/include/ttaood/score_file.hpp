#pragma once

// Per-sample scores for one (scorer x view). Stored as a CSV with header
// "sample_id,score" plus a JSON sidecar at "<csv>.json" carrying the scorer
// id, view, orientation and configuration echo.

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace ttaood {

inline constexpr const char* kOodPositive = "ood-positive";

struct ScoreFile {
  std::vector<std::string> sample_ids;
  std::vector<double> scores;
  std::string scorer_id;
  std::string view = "none";
  nlohmann::json config = nlohmann::json::object();

  // Always "ood-positive": larger means more OOD.
  static constexpr const char* orientation() { return kOodPositive; }

  std::size_t size() const { return scores.size(); }
  void validate() const;

  friend bool operator==(const ScoreFile& a, const ScoreFile& b);
};

std::filesystem::path sidecar_path(const std::filesystem::path& csv);

void write_score_file(const ScoreFile& scores, const std::filesystem::path& csv);
ScoreFile read_score_file(const std::filesystem::path& csv);

// Shortest text that parses back to exactly the same double.
std::string format_exact(double value);

// Minimal RFC 4180 helpers used by every CSV this project writes.
std::string csv_field(const std::string& text);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace ttaood
