#include "ttaood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ttaood/error.hpp"

namespace ttaood {
using nlohmann::json;

namespace {

void require_nonempty(std::span<const double> scores, const char* what) {
  if (scores.empty()) throw DataError(std::string(what) + " scores are empty");
}

void require_target(double tpr_target) {
  if (!(tpr_target > 0.0 && tpr_target < 1.0)) {
    throw UsageError("tpr target must lie strictly between 0 and 1");
  }
}

// Summing in sorted order makes the mean independent of sample order.
double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, "ID");
  require_nonempty(ood_scores, "OOD");

  struct Entry {
    double score;
    bool ood;
  };
  std::vector<Entry> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (const double s : id_scores) all.push_back({s, false});
  for (const double s : ood_scores) all.push_back({s, true});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Twice the mid-rank of a tie group spanning positions [p, p+g) is 2p + g + 1,
  // which keeps the whole rank sum in integers.
  std::uint64_t doubled_rank_sum = 0;
  std::size_t p = 0;
  while (p < all.size()) {
    std::size_t q = p;
    std::uint64_t ood_in_group = 0;
    while (q < all.size() && all[q].score == all[p].score) {
      ood_in_group += all[q].ood ? 1 : 0;
      ++q;
    }
    const std::uint64_t g = q - p;
    doubled_rank_sum += ood_in_group * (2 * static_cast<std::uint64_t>(p) + g + 1);
    p = q;
  }
  const auto n_ood = static_cast<std::uint64_t>(ood_scores.size());
  const auto n_id = static_cast<std::uint64_t>(id_scores.size());
  const std::uint64_t doubled_u = doubled_rank_sum - n_ood * (n_ood + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_id) * static_cast<double>(n_ood));
}

std::size_t required_id_count(std::size_t n, double tpr_target) {
  require_target(tpr_target);
  const double nd = static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::min(nd, std::max(0.0, std::ceil(tpr_target * nd))));
  while (k > 0 && static_cast<double>(k - 1) / nd >= tpr_target) --k;
  while (k < n && static_cast<double>(k) / nd < tpr_target) ++k;
  return k;
}

double fit_threshold(std::span<const double> id_scores, double tpr_target) {
  require_nonempty(id_scores, "ID");
  const std::size_t need = required_id_count(id_scores.size(), tpr_target);
  std::vector<double> sorted(id_scores.begin(), id_scores.end());
  std::sort(sorted.begin(), sorted.end());
  if (need == 0) return sorted.front();
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), sorted[need - 1]);
  if (it == sorted.end()) {
    throw NumericalError("degenerate scores: target unattainable with strict inequality (" +
                         std::to_string(need) + " of " + std::to_string(sorted.size()) +
                         " ID scores must fall strictly below an observed score)");
  }
  return *it;
}

double fraction_below(std::span<const double> scores, double lambda) {
  require_nonempty(scores, "input");
  const auto below = std::count_if(scores.begin(), scores.end(), [lambda](double s) { return s < lambda; });
  return static_cast<double>(below) / static_cast<double>(scores.size());
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target) {
  require_nonempty(ood_scores, "OOD");
  return fraction_below(ood_scores, fit_threshold(id_scores, tpr_target));
}

std::vector<Verdict> classify(const ScoreFile& scores, double lambda) {
  scores.validate();
  std::vector<Verdict> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.push_back({scores.sample_ids[i], scores.scores[i],
                   scores.scores[i] >= lambda ? Decision::Ood : Decision::Id});
  }
  return out;
}

EvalReport evaluate(const ScoreFile& id_scores, const ScoreFile& ood_scores,
                    const std::map<std::string, std::string>& ood_labels, double tpr_target) {
  id_scores.validate();
  ood_scores.validate();
  if (id_scores.scorer_id != ood_scores.scorer_id) {
    throw DataError("scorer mismatch: ID scores from '" + id_scores.scorer_id + "', OOD scores from '" +
                    ood_scores.scorer_id + "'");
  }
  if (id_scores.view != ood_scores.view) {
    throw DataError("view mismatch: ID scores for '" + id_scores.view + "', OOD scores for '" +
                    ood_scores.view + "'");
  }

  EvalReport r;
  r.scorer_id = id_scores.scorer_id;
  r.view = id_scores.view;
  r.tpr_target = tpr_target;
  r.threshold = fit_threshold(id_scores.scores, tpr_target);
  r.auroc = auroc(id_scores.scores, ood_scores.scores);
  r.fpr_at_tpr = fraction_below(ood_scores.scores, r.threshold);
  r.mean_id_score = order_free_mean(id_scores.scores);
  r.mean_ood_score = order_free_mean(ood_scores.scores);
  r.n_id = id_scores.size();
  r.n_ood = ood_scores.size();

  if (!ood_labels.empty()) {
    std::map<std::string, std::vector<double>> by_class;
    for (std::size_t i = 0; i < ood_scores.size(); ++i) {
      const auto it = ood_labels.find(ood_scores.sample_ids[i]);
      if (it == ood_labels.end()) {
        throw DataError("no OOD class label for sample '" + ood_scores.sample_ids[i] + "'");
      }
      by_class[it->second].push_back(ood_scores.scores[i]);
    }
    for (const auto& [tag, scores] : by_class) {
      r.per_ood_class[tag] = fraction_below(scores, r.threshold);
      r.per_ood_count[tag] = scores.size();
    }
  }

  r.config = {{"scorer", id_scores.config},
              {"id_view", id_scores.view},
              {"orientation", kOodPositive},
              {"positive_class", "id"},
              {"fpr_convention", "TPR measured on ID scores, FPR on OOD scores; ID iff score < threshold"},
              {"threshold_rule", "smallest observed ID score with fraction(ID < threshold) >= tpr_target"},
              {"auroc_ties", "counted as 0.5"},
              {"aggregation", "augmented view only"},
              {"augmentation",
               {{"jitter_defaults", {{"b", "0.6:1.4"}, {"c", "0.6:1.4"}, {"s", "0.6:1.4"}, {"h", "-10:10"}}},
                {"jitter_order", "brightness, contrast, saturation, hue"},
                {"jitter_resampling", "per image, keyed by relative path and --seed"},
                {"rounding", "clamp to [0,255] after each stage, round half up once at the end"},
                {"equalize", "per-channel cdf_min variant, constant channel unchanged"}}}};
  return r;
}

json to_json(const EvalReport& r) {
  return json{{"scorer_id", r.scorer_id},
              {"view", r.view},
              {"auroc", r.auroc},
              {"fpr_at_tpr", r.fpr_at_tpr},
              {"tpr_target", r.tpr_target},
              {"threshold", r.threshold},
              {"per_ood_class", r.per_ood_class},
              {"per_ood_count", r.per_ood_count},
              {"mean_ood_score", r.mean_ood_score},
              {"mean_id_score", r.mean_id_score},
              {"n_id", r.n_id},
              {"n_ood", r.n_ood},
              {"config", r.config}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.scorer_id = j.at("scorer_id").get<std::string>();
    r.view = j.at("view").get<std::string>();
    r.auroc = j.at("auroc").get<double>();
    r.fpr_at_tpr = j.at("fpr_at_tpr").get<double>();
    r.tpr_target = j.at("tpr_target").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.per_ood_class = j.at("per_ood_class").get<std::map<std::string, double>>();
    r.per_ood_count = j.at("per_ood_count").get<std::map<std::string, std::size_t>>();
    r.mean_ood_score = j.at("mean_ood_score").get<double>();
    r.mean_id_score = j.at("mean_id_score").get<double>();
    r.n_id = j.at("n_id").get<std::size_t>();
    r.n_ood = j.at("n_ood").get<std::size_t>();
    r.config = j.at("config");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

MetricDelta compare_metric(double baseline, double tta, bool higher_is_better) {
  MetricDelta d;
  d.baseline = baseline;
  d.tta = tta;
  d.delta = tta - baseline;
  d.improved = higher_is_better ? d.delta > 0.0 : d.delta < 0.0;
  return d;
}

ReportDelta compare_reports(const EvalReport& baseline, const EvalReport& tta) {
  return {compare_metric(baseline.auroc, tta.auroc, true),
          compare_metric(baseline.fpr_at_tpr, tta.fpr_at_tpr, false),
          compare_metric(baseline.mean_ood_score, tta.mean_ood_score, true)};
}

ScoreFile mean_over_views(const std::vector<ScoreFile>& views) {
  if (views.empty()) throw UsageError("mean_over_views needs at least one view");
  ScoreFile out = views.front();
  out.validate();
  std::string name = "mean(" + views.front().view;
  for (std::size_t v = 1; v < views.size(); ++v) {
    const auto& other = views[v];
    other.validate();
    if (other.sample_ids != out.sample_ids) {
      throw DataError("views disagree on sample ids; cannot aggregate");
    }
    if (other.scorer_id != out.scorer_id) throw DataError("views come from different scorers");
    for (std::size_t i = 0; i < out.size(); ++i) out.scores[i] += other.scores[i];
    name += "|" + other.view;
  }
  for (auto& s : out.scores) s /= static_cast<double>(views.size());
  out.view = name + ")";
  return out;
}

}  // namespace ttaood
