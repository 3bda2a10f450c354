#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"
#include "ttaood/parallel.hpp"
#include "ttaood/pipeline.hpp"
#include "ttaood/scoring.hpp"

namespace ttaood {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", 100.0 * fraction);
  return buf;
}

std::string percent_short(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

std::string signed_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.4f", 100.0 * fraction);
  return buf;
}

std::string fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct ColumnBest {
  std::optional<double> auc;
  std::optional<double> fpr;
};

// Best AUC (max) and FPR (min) per scorer column across all rows.
std::vector<ColumnBest> column_bests(const GridResult& r) {
  std::vector<ColumnBest> best(r.manifest.scorers.size());
  for (const auto& cell : r.cells) {
    if (!cell.report) continue;
    auto& b = best[cell.scorer];
    if (!b.auc || cell.report->auroc > *b.auc) b.auc = cell.report->auroc;
    if (!b.fpr || cell.report->fpr_at_tpr < *b.fpr) b.fpr = cell.report->fpr_at_tpr;
  }
  return best;
}

std::string cell_file_stem(const GridResult& r, const GridCell& cell) {
  return r.manifest.views[cell.view].dir + "__" + to_string(r.manifest.scorers[cell.scorer].id);
}

std::map<std::string, std::string> labels_of(const FeaturePack& pack) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < pack.sample_ids.size(); ++i) out[pack.sample_ids[i]] = pack.labels[i].to_string();
  return out;
}

}  // namespace

std::size_t RunManifest::baseline_index() const {
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].spec == "none") return i;
  }
  throw UsageError("manifest must include the baseline view with spec \"none\"");
}

void RunManifest::validate() const {
  if (views.empty()) throw UsageError("manifest needs at least one view");
  if (scorers.empty()) throw UsageError("manifest needs at least one scorer");
  baseline_index();
  if (!(tpr_target > 0.0 && tpr_target < 1.0)) throw UsageError("tpr_target must lie in (0, 1)");
  for (const auto& s : scorers) s.validate();
}

RunManifest load_manifest(const fs::path& path) {
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  RunManifest m;
  try {
    const json j = json::parse(binio::read_text(path));
    m.packs_root = resolve(base, j.value("packs_root", std::string(".")));
    for (const auto& v : j.at("views")) {
      GridView view;
      if (v.is_string()) {
        view.name = view.spec = view.dir = v.get<std::string>();
      } else {
        view.spec = v.at("spec").get<std::string>();
        view.name = v.value("name", view.spec);
        view.dir = v.value("dir", view.spec);
      }
      m.views.push_back(std::move(view));
    }
    for (const auto& s : j.at("scorers")) m.scorers.push_back(scorer_config_from_json(s));
    m.tpr_target = j.value("tpr_target", kDefaultTprTarget);
    m.out = resolve(base, j.value("out", std::string("grid")));
    m.seed = j.value("seed", std::uint64_t{0});
    const auto aggregate = j.value("aggregate", std::string("none"));
    if (aggregate == "mean-with-baseline") {
      m.mean_with_baseline = true;
    } else if (aggregate != "none") {
      throw UsageError("unknown aggregate mode '" + aggregate + "'");
    }
    if (j.contains("head")) {
      m.head = resolve(base, j.at("head").get<std::string>());
    } else if (fs::is_directory(m.packs_root / "head")) {
      m.head = m.packs_root / "head";
    }
    m.validate();
    if (j.contains("train")) {
      m.train_pack = resolve(base, j.at("train").get<std::string>());
    } else {
      m.train_pack = m.packs_root / m.views[m.baseline_index()].dir / "train";
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

GridResult run_grid(const RunManifest& manifest, int jobs) {
  manifest.validate();
  GridResult result;
  result.manifest = manifest;
  const std::size_t n_views = manifest.views.size();
  const std::size_t n_scorers = manifest.scorers.size();

  // Fits happen once per scorer, serially, before any cell runs.
  std::vector<std::optional<FittedScorerArchive>> fitted(n_scorers);
  std::vector<std::string> fit_error(n_scorers);
  std::optional<FeaturePack> train;
  std::optional<ClassifierHead> head;
  for (std::size_t s = 0; s < n_scorers; ++s) {
    const auto& config = manifest.scorers[s];
    if (!requires_fit(config.id)) continue;
    try {
      if (!train) train = read_pack(manifest.train_pack);
      if (requires_head(config.id) && !head) {
        if (!manifest.head) throw UsageError("vim requires a classifier head in the manifest");
        head = read_head(*manifest.head);
      }
      fitted[s] = fit_scorer(config, *train, head ? &*head : nullptr);
    } catch (const Error& e) {
      fit_error[s] = e.what();
    }
  }

  // Load packs per view once; a missing pack marks the whole row absent.
  struct ViewPacks {
    std::optional<FeaturePack> id, ood;
    std::string missing;
  };
  std::vector<ViewPacks> packs(n_views);
  parallel_for(n_views, jobs, [&](std::size_t v) {
    const fs::path dir = manifest.packs_root / manifest.views[v].dir;
    try {
      packs[v].id = read_pack(dir / "test_id");
      packs[v].ood = read_pack(dir / "test_ood");
    } catch (const DataError& e) {
      packs[v].missing = e.what();
    }
  });

  const std::size_t baseline = manifest.baseline_index();
  std::vector<std::optional<ScoreFile>> id_scores(n_views * n_scorers), ood_scores(n_views * n_scorers);
  result.cells.resize(n_views * n_scorers);
  parallel_for(n_views * n_scorers, jobs, [&](std::size_t k) {
    auto& cell = result.cells[k];
    cell.view = k / n_scorers;
    cell.scorer = k % n_scorers;
    const auto& config = manifest.scorers[cell.scorer];
    const auto& vp = packs[cell.view];
    if (!vp.missing.empty()) {
      cell.status = "absent: " + vp.missing;
      return;
    }
    if (!fit_error[cell.scorer].empty()) {
      cell.status = "error: " + fit_error[cell.scorer];
      return;
    }
    try {
      const auto* archive = fitted[cell.scorer] ? &*fitted[cell.scorer] : nullptr;
      id_scores[k] = score_pack(config, *vp.id, archive, 1);
      ood_scores[k] = score_pack(config, *vp.ood, archive, 1);
    } catch (const Error& e) {
      cell.status = "error: " + std::string(e.what());
    }
  });

  parallel_for(n_views * n_scorers, jobs, [&](std::size_t k) {
    auto& cell = result.cells[k];
    if (!id_scores[k] || !ood_scores[k]) return;
    ScoreFile id = *id_scores[k];
    ScoreFile ood = *ood_scores[k];
    if (manifest.mean_with_baseline && cell.view != baseline) {
      const std::size_t b = baseline * n_scorers + cell.scorer;
      if (!id_scores[b] || !ood_scores[b]) {
        cell.status = "absent: baseline scores unavailable for aggregation";
        return;
      }
      try {
        ScoreFile id_base = *id_scores[b], ood_base = *ood_scores[b];
        id_base.view = ood_base.view = "none";
        id.view = ood.view = manifest.views[cell.view].spec;
        id = mean_over_views({id_base, id});
        ood = mean_over_views({ood_base, ood});
      } catch (const Error& e) {
        cell.status = "error: " + std::string(e.what());
        return;
      }
    }
    try {
      cell.report = evaluate(id, ood, labels_of(*packs[cell.view].ood), manifest.tpr_target);
      if (manifest.mean_with_baseline && cell.view != baseline) {
        cell.report->config["aggregation"] = "mean of baseline and augmented view scores";
      }
    } catch (const NumericalError& e) {
      cell.status = "degenerate: " + std::string(e.what());
    } catch (const Error& e) {
      cell.status = "error: " + std::string(e.what());
    }
  });
  return result;
}

std::string render_grid_csv(const GridResult& r) {
  const auto& scorers = r.manifest.scorers;
  const auto best = column_bests(r);
  const std::size_t baseline = r.manifest.baseline_index();
  std::string out = "view,dir,role";
  for (const auto& s : scorers) {
    const auto id = to_string(s.id);
    out += "," + id + "_auc," + id + "_fpr," + id + "_delta_auc," + id + "_delta_fpr," + id + "_best," +
           id + "_status";
  }
  out += "\n";
  for (std::size_t v = 0; v < r.manifest.views.size(); ++v) {
    const auto& view = r.manifest.views[v];
    out += csv_field(view.name) + "," + csv_field(view.dir) + "," + (v == baseline ? "baseline" : "tta");
    for (std::size_t s = 0; s < scorers.size(); ++s) {
      const auto& cell = r.cell(v, s);
      const auto& base = r.cell(baseline, s);
      if (!cell.report) {
        out += ",,,,,," + csv_field(cell.status);
        continue;
      }
      out += "," + percent(cell.report->auroc) + "," + percent(cell.report->fpr_at_tpr);
      if (base.report) {
        const auto d = compare_reports(*base.report, *cell.report);
        out += "," + signed_percent(d.auroc.delta) + "," + signed_percent(d.fpr.delta);
      } else {
        out += ",,";
      }
      std::string marker;
      if (best[s].auc && cell.report->auroc == *best[s].auc) marker = "auc";
      if (best[s].fpr && cell.report->fpr_at_tpr == *best[s].fpr) marker += marker.empty() ? "fpr" : "+fpr";
      out += "," + marker + ",ok";
    }
    out += "\n";
  }
  return out;
}

std::string render_grid_text(const GridResult& r) {
  const auto& scorers = r.manifest.scorers;
  const auto best = column_bests(r);
  const std::size_t baseline = r.manifest.baseline_index();

  std::size_t label_width = std::string("Augmentations").size();
  for (const auto& v : r.manifest.views) label_width = std::max(label_width, v.name.size());
  constexpr int kCol = 9;

  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(label_width), "Augmentations");
  out << buf;
  for (const auto& s : scorers) {
    std::snprintf(buf, sizeof(buf), " | %-*s", 2 * kCol + 1, to_string(s.id).c_str());
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(label_width), "");
  out << buf;
  for (std::size_t s = 0; s < scorers.size(); ++s) {
    std::snprintf(buf, sizeof(buf), " | %*s %*s", kCol, "AUC", kCol, "FPR");
    out << buf;
  }
  out << "\n";
  for (std::size_t v = 0; v < r.manifest.views.size(); ++v) {
    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(label_width), r.manifest.views[v].name.c_str());
    out << buf;
    for (std::size_t s = 0; s < scorers.size(); ++s) {
      const auto& cell = r.cell(v, s);
      if (!cell.report) {
        std::snprintf(buf, sizeof(buf), " | %*s %*s", kCol, "-", kCol, "-");
        out << buf;
        continue;
      }
      const auto& base = r.cell(baseline, s);
      std::string auc = percent_short(cell.report->auroc);
      std::string fpr = percent_short(cell.report->fpr_at_tpr);
      if (v != baseline && base.report) {
        const auto d = compare_reports(*base.report, *cell.report);
        if (d.auroc.improved) auc += "+";
        if (d.fpr.improved) fpr += "+";
      }
      if (best[s].auc && cell.report->auroc == *best[s].auc) auc += "*";
      if (best[s].fpr && cell.report->fpr_at_tpr == *best[s].fpr) fpr += "*";
      std::snprintf(buf, sizeof(buf), " | %*s %*s", kCol, auc.c_str(), kCol, fpr.c_str());
      out << buf;
    }
    out << "\n";
  }
  out << "\nAUC and FPR@" << percent_short(r.manifest.tpr_target)
      << "TPR in percent. '*' best in column, '+' improvement over the baseline row.\n";
  for (const auto& cell : r.cells) {
    if (!cell.report) {
      out << "note: " << r.manifest.views[cell.view].name << " x " << to_string(r.manifest.scorers[cell.scorer].id)
          << ": " << cell.status << "\n";
    }
  }
  return out.str();
}

std::string render_per_class_csv(const GridResult& r) {
  const std::size_t baseline = r.manifest.baseline_index();
  std::string out = "view,scorer,ood_class,count,fpr,delta_fpr\n";
  for (const auto& cell : r.cells) {
    if (!cell.report) continue;
    const auto& base = r.cell(baseline, cell.scorer);
    for (const auto& [tag, fpr] : cell.report->per_ood_class) {
      out += csv_field(r.manifest.views[cell.view].name) + "," + to_string(r.manifest.scorers[cell.scorer].id) +
             "," + csv_field(tag) + "," + std::to_string(cell.report->per_ood_count.at(tag)) + "," + percent(fpr);
      if (base.report && base.report->per_ood_class.contains(tag)) {
        out += "," + signed_percent(fpr - base.report->per_ood_class.at(tag));
      } else {
        out += ",";
      }
      out += "\n";
    }
  }
  return out;
}

std::string render_mean_scores_csv(const GridResult& r) {
  std::string out = "view,scorer,mean_id_score,mean_ood_score\n";
  for (const auto& cell : r.cells) {
    if (!cell.report) continue;
    out += csv_field(r.manifest.views[cell.view].name) + "," + to_string(r.manifest.scorers[cell.scorer].id) +
           "," + fixed6(cell.report->mean_id_score) + "," + fixed6(cell.report->mean_ood_score) + "\n";
  }
  return out;
}

void write_grid_outputs(const GridResult& r) {
  const auto& out = r.manifest.out;
  fs::create_directories(out / "reports");
  binio::write_text(out / "grid.csv", render_grid_csv(r));
  binio::write_text(out / "grid.txt", render_grid_text(r));
  binio::write_text(out / "per_class.csv", render_per_class_csv(r));
  binio::write_text(out / "mean_scores.csv", render_mean_scores_csv(r));
  for (const auto& cell : r.cells) {
    if (!cell.report) continue;
    binio::write_text(out / "reports" / (cell_file_stem(r, cell) + ".json"), to_json(*cell.report).dump(1) + "\n");
  }
}

}  // namespace ttaood
