#include "ttaood/pipeline.hpp"

#include <algorithm>
#include <json.hpp>
#include <sstream>

#include "ttaood/augment.hpp"
#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"
#include "ttaood/image_io.hpp"
#include "ttaood/parallel.hpp"
#include "ttaood/rng.hpp"
#include "ttaood/scoring.hpp"

namespace ttaood {
namespace fs = std::filesystem;
using nlohmann::json;

AugmentSummary augment_directory(const fs::path& in_dir, const fs::path& out_dir,
                                 const std::string& spec_text, std::uint64_t seed, int jobs) {
  const AugmentationSpec spec = parse_spec(spec_text);
  if (!fs::is_directory(in_dir)) throw DataError("input directory not found: " + in_dir.string());

  std::vector<fs::path> inputs;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      inputs.push_back(fs::relative(entry.path(), in_dir));
    }
  }
  std::sort(inputs.begin(), inputs.end());

  std::vector<std::string> failures(inputs.size());
  std::vector<char> ok(inputs.size(), 0);
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    const auto& rel = inputs[i];
    try {
      const ImageBuffer img = read_image(in_dir / rel);
      const ImageBuffer out = apply(spec, img, seed, hash_string(rel.generic_string()));
      auto target = out_dir / rel;
      target.replace_extension(".png");
      fs::create_directories(target.parent_path());
      write_png(target, out);
      ok[i] = 1;
    } catch (const DataError& e) {
      failures[i] = rel.generic_string() + ": " + e.what();
    }
  });

  AugmentSummary summary;
  json files = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (ok[i]) {
      ++summary.written;
      files.push_back(inputs[i].generic_string());
    } else {
      summary.skipped.push_back(failures[i]);
    }
  }
  fs::create_directories(out_dir);
  json manifest{{"spec", render_spec(spec)},
                {"spec_text", spec_text},
                {"seed", seed},
                {"written", summary.written},
                {"files", files},
                {"skipped", summary.skipped},
                {"jitter_defaults", {{"b", "0.6:1.4"}, {"c", "0.6:1.4"}, {"s", "0.6:1.4"}, {"h", "-10:10"}}},
                {"jitter_order", "brightness, contrast, saturation, hue"},
                {"jitter_resampling", "per image; stream key = FNV-1a of the relative path"}};
  binio::write_text(out_dir / "augment_manifest.json", manifest.dump(1) + "\n");
  return summary;
}

FittedScorerArchive run_fit(const ScorerConfig& config, const fs::path& train_pack,
                            const std::optional<fs::path>& head_dir, const fs::path& out_dir) {
  config.validate();
  if (!requires_fit(config.id)) throw UsageError(to_string(config.id) + " requires no fitting");
  if (requires_head(config.id) && !head_dir) {
    throw UsageError(to_string(config.id) + " requires a classifier head (--head)");
  }
  const FeaturePack train = read_pack(train_pack);
  std::optional<ClassifierHead> head;
  if (head_dir) head = read_head(*head_dir);
  auto archive = fit_scorer(config, train, head ? &*head : nullptr);
  write_archive(archive, out_dir);
  return archive;
}

ScoreFile run_score(const ScorerConfig& config, const fs::path& pack_dir,
                    const std::optional<fs::path>& archive_dir, const fs::path& out_csv, int jobs) {
  const FeaturePack pack = read_pack(pack_dir);
  std::optional<FittedScorerArchive> archive;
  if (archive_dir) archive = read_archive(*archive_dir);
  if (requires_fit(config.id) && !archive) {
    throw UsageError(to_string(config.id) + " needs a fitted archive (--archive)");
  }
  auto scores = score_pack(config, pack, archive ? &*archive : nullptr, jobs);
  write_score_file(scores, out_csv);
  return scores;
}

std::map<std::string, std::string> load_ood_labels(const fs::path& path) {
  std::map<std::string, std::string> labels;
  if (fs::is_directory(path)) {
    const FeaturePack pack = read_pack(path);
    for (std::size_t i = 0; i < pack.sample_ids.size(); ++i) {
      labels[pack.sample_ids[i]] = pack.labels[i].to_string();
    }
    return labels;
  }
  std::istringstream in(binio::read_text(path));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"sample_id", "label"}) {
    throw DataError("malformed label CSV " + path.string() + ": expected header 'sample_id,label'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw DataError("malformed label CSV row: " + line);
    labels[fields[0]] = fields[1];
  }
  return labels;
}

EvalReport run_eval(const fs::path& id_csv, const fs::path& ood_csv,
                    const std::optional<fs::path>& ood_labels, double tpr_target, const fs::path& out_json) {
  const ScoreFile id_scores = read_score_file(id_csv);
  const ScoreFile ood_scores = read_score_file(ood_csv);
  std::map<std::string, std::string> labels;
  if (ood_labels) labels = load_ood_labels(*ood_labels);
  EvalReport report = evaluate(id_scores, ood_scores, labels, tpr_target);
  if (out_json.has_parent_path()) fs::create_directories(out_json.parent_path());
  binio::write_text(out_json, to_json(report).dump(1) + "\n");
  return report;
}

PackCheck validate_pack_dir(const fs::path& pack_dir, const std::optional<fs::path>& head_dir, double tol) {
  const FeaturePack pack = read_pack(pack_dir);
  PackCheck check{pack.num_samples(), pack.feature_dim(), pack.num_classes(), std::nullopt};
  if (head_dir) {
    const ClassifierHead head = read_head(*head_dir);
    const double dev = max_logit_deviation(pack, head);
    check.max_logit_deviation = dev;
    if (dev > tol) {
      throw DataError("logits disagree with head: max |logit - (W x + b)| = " + format_exact(dev) +
                      " exceeds tolerance " + format_exact(tol));
    }
  }
  return check;
}

SynthData write_synth(const SynthConfig& config, const fs::path& out_dir,
                      const std::vector<ScorerConfig>& scorers) {
  SynthData data = generate(config);
  write_pack(data.train, out_dir / "none" / "train");
  write_pack(data.val, out_dir / "none" / "val");
  write_pack(data.test_id, out_dir / "none" / "test_id");
  write_pack(data.test_ood, out_dir / "none" / "test_ood");
  write_head(data.head, out_dir / "head");

  // ID and OOD splits drift by different magnitudes but must share a view tag.
  const std::string tag = "synthetic-drift(id=" + format_exact(config.drift_id) +
                          ",ood=" + format_exact(config.drift_ood) + ")";
  const auto drift_seed = mix_seed(config.seed, 0xD21F7ull);
  for (const auto* pack : {&data.val, &data.test_id, &data.test_ood}) {
    const double magnitude = pack->split == Split::TestOod ? config.drift_ood : config.drift_id;
    FeaturePack drifted = drifted_view(*pack, data.head, magnitude, drift_seed);
    drifted.view = tag;
    write_pack(drifted, out_dir / "drift" / to_string(pack->split));
  }

  json scorer_list = json::array();
  for (const auto& s : scorers) {
    json entry{{"id", to_string(s.id)}};
    if (s.temperature) entry["temperature"] = *s.temperature;
    if (s.id == ScorerId::Mahalanobis) entry["shrinkage"] = s.shrinkage;
    if (s.subspace_dim) entry["subspace_dim"] = *s.subspace_dim;
    scorer_list.push_back(entry);
  }
  json manifest{{"packs_root", "."},
                {"head", "head"},
                {"views", json::array({json{{"name", "None"}, {"spec", "none"}, {"dir", "none"}},
                                       json{{"name", "Drift"}, {"spec", tag}, {"dir", "drift"}}})},
                {"scorers", scorer_list},
                {"tpr_target", kDefaultTprTarget},
                {"out", "grid"},
                {"seed", config.seed},
                {"synth",
                 {{"feature_dim", config.feature_dim},
                  {"num_classes", config.num_classes},
                  {"n_per_class", config.n_per_class},
                  {"n_ood", config.n_ood},
                  {"id_spread", config.id_spread},
                  {"ood_offset", config.ood_offset},
                  {"drift_id", config.drift_id},
                  {"drift_ood", config.drift_ood}}}};
  binio::write_text(out_dir / "manifest.json", manifest.dump(1) + "\n");
  return data;
}

}  // namespace ttaood
