#pragma once

// Evaluation of OOD-positive scores.
//
// Positive class for TPR is ID: a sample is predicted ID when score < lambda
// and OOD when score >= lambda. FPR@TPR is the fraction of OOD samples that
// fall below lambda, with lambda fit on the ID scores.

#include <cstddef>
#include <json.hpp>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttaood/score_file.hpp"

namespace ttaood {

inline constexpr double kDefaultTprTarget = 0.95;

// Tie-aware Mann-Whitney AUROC: P(ood > id) + 0.5 P(ood == id), via ranks.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// Smallest k with k / n >= tpr_target, evaluated in double like the ratio it guards.
std::size_t required_id_count(std::size_t n, double tpr_target);

// The smallest observed ID score lambda such that the fraction of ID scores
// strictly below lambda reaches tpr_target. Throws NumericalError when no
// observed value achieves that (e.g. all scores equal).
double fit_threshold(std::span<const double> id_scores, double tpr_target = kDefaultTprTarget);

// Fraction of OOD scores strictly below fit_threshold(id_scores, tpr_target).
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target = kDefaultTprTarget);

// Fraction of scores strictly below lambda.
double fraction_below(std::span<const double> scores, double lambda);

enum class Decision { Id, Ood };

struct Verdict {
  std::string sample_id;
  double score = 0.0;
  Decision decision = Decision::Id;
};

std::vector<Verdict> classify(const ScoreFile& scores, double lambda);

struct EvalReport {
  std::string scorer_id;
  std::string view;
  double auroc = 0.0;
  double fpr_at_tpr = 0.0;
  double tpr_target = kDefaultTprTarget;
  double threshold = 0.0;
  std::map<std::string, double> per_ood_class;       // tag -> FPR at the shared threshold
  std::map<std::string, std::size_t> per_ood_count;  // tag -> sample count
  double mean_ood_score = 0.0;
  double mean_id_score = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  nlohmann::json config = nlohmann::json::object();

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// OOD labels map sample id -> class tag; pass an empty map to skip the
// per-class breakdown. Throws when the files disagree on scorer or view, or
// when a labelled breakdown misses a sample.
EvalReport evaluate(const ScoreFile& id_scores, const ScoreFile& ood_scores,
                    const std::map<std::string, std::string>& ood_labels,
                    double tpr_target = kDefaultTprTarget);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

struct MetricDelta {
  double baseline = 0.0;
  double tta = 0.0;
  double delta = 0.0;  // tta - baseline
  bool improved = false;
};

MetricDelta compare_metric(double baseline, double tta, bool higher_is_better);

struct ReportDelta {
  MetricDelta auroc;
  MetricDelta fpr;
  MetricDelta mean_ood_score;  // "improved" means the OOD mean rose
};

ReportDelta compare_reports(const EvalReport& baseline, const EvalReport& tta);

// Per-sample mean over several views of the same samples (optional
// aggregation mode; the default pipeline scores each view on its own).
ScoreFile mean_over_views(const std::vector<ScoreFile>& views);

}  // namespace ttaood
