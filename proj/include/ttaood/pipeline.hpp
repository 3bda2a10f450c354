#pragma once

// Filesystem-staged workflow behind the ttaood CLI. Each stage reads and
// writes the formats in pack.hpp, archive.hpp, score_file.hpp and metrics.hpp.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ttaood/archive.hpp"
#include "ttaood/metrics.hpp"
#include "ttaood/scorers.hpp"
#include "ttaood/synth.hpp"

namespace ttaood {

// ---- augment ---------------------------------------------------------------

struct AugmentSummary {
  std::size_t written = 0;
  std::vector<std::string> skipped;  // one warning per unreadable input
};

// Mirrors in_dir under out_dir with augmented PNGs (extension becomes .png)
// and writes out_dir/augment_manifest.json. Each image draws its random
// jitter from a stream keyed by its relative path, so output does not depend
// on the job count.
AugmentSummary augment_directory(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                                 const std::string& spec_text, std::uint64_t seed, int jobs = 1);

// ---- fit / score / eval ----------------------------------------------------

FittedScorerArchive run_fit(const ScorerConfig& config, const std::filesystem::path& train_pack,
                            const std::optional<std::filesystem::path>& head_dir,
                            const std::filesystem::path& out_dir);

ScoreFile run_score(const ScorerConfig& config, const std::filesystem::path& pack_dir,
                    const std::optional<std::filesystem::path>& archive_dir,
                    const std::filesystem::path& out_csv, int jobs = 1);

// A pack directory (labels from meta.json) or a CSV with header "sample_id,label".
std::map<std::string, std::string> load_ood_labels(const std::filesystem::path& path);

EvalReport run_eval(const std::filesystem::path& id_csv, const std::filesystem::path& ood_csv,
                    const std::optional<std::filesystem::path>& ood_labels, double tpr_target,
                    const std::filesystem::path& out_json);

// Checks pack invariants and, with a head, that logits match W x + b within tol.
struct PackCheck {
  Eigen::Index n = 0, m = 0, num_classes = 0;
  std::optional<double> max_logit_deviation;
};
PackCheck validate_pack_dir(const std::filesystem::path& pack_dir,
                            const std::optional<std::filesystem::path>& head_dir, double tol = 1e-4);

// ---- grid ------------------------------------------------------------------

struct GridView {
  std::string name;  // row label
  std::string spec;  // augmentation spec text; "none" marks the baseline
  std::string dir;   // subdirectory of packs_root holding test_id/ and test_ood/
};

struct RunManifest {
  std::filesystem::path packs_root;
  std::filesystem::path train_pack;             // defaults to <root>/<baseline dir>/train
  std::optional<std::filesystem::path> head;    // defaults to <root>/head when present
  std::vector<GridView> views;
  std::vector<ScorerConfig> scorers;
  double tpr_target = kDefaultTprTarget;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  bool mean_with_baseline = false;  // optional aggregation mode, off by default

  std::size_t baseline_index() const;
  void validate() const;
};

// Relative paths in the manifest resolve against the manifest's directory.
RunManifest load_manifest(const std::filesystem::path& path);

struct GridCell {
  std::size_t view = 0;
  std::size_t scorer = 0;
  std::optional<EvalReport> report;
  std::string status = "ok";  // "ok", "absent: ...", "degenerate: ...", "error: ..."
};

struct GridResult {
  RunManifest manifest;
  std::vector<GridCell> cells;  // row-major: view x scorer

  const GridCell& cell(std::size_t view, std::size_t scorer) const {
    return cells[view * manifest.scorers.size() + scorer];
  }
};

// Evaluates every (view x scorer) cell. Cells run in parallel; the result
// is identical for any job count.
GridResult run_grid(const RunManifest& manifest, int jobs = 1);

// Writes grid.csv, grid.txt, per_class.csv, mean_scores.csv and reports/*.json.
void write_grid_outputs(const GridResult& result);

std::string render_grid_csv(const GridResult& result);
std::string render_grid_text(const GridResult& result);
std::string render_per_class_csv(const GridResult& result);
std::string render_mean_scores_csv(const GridResult& result);

// ---- synth -----------------------------------------------------------------

// Writes <out>/none/{train,val,test_id,test_ood}, <out>/drift/{val,test_id,test_ood},
// <out>/head and a grid manifest <out>/manifest.json covering both views.
SynthData write_synth(const SynthConfig& config, const std::filesystem::path& out_dir,
                      const std::vector<ScorerConfig>& scorers);

}  // namespace ttaood
