#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"
#include "ttaood/pipeline.hpp"
#include "ttaood/scoring.hpp"

namespace fs = std::filesystem;
using namespace ttaood;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

struct ScorerFlags {
  std::string id;
  std::optional<double> temperature;
  std::optional<double> shrinkage;
  std::optional<int> subspace_dim;

  void add(CLI::App* cmd) {
    cmd->add_option("--scorer", id, "msp, entropy, maxlogit, energy, odin, mahalanobis, vim")->required();
    cmd->add_option("--temperature", temperature, "energy / odin temperature");
    cmd->add_option("--shrinkage", shrinkage, "mahalanobis ridge factor");
    cmd->add_option("--subspace-dim", subspace_dim, "vim principal subspace size");
  }

  ScorerConfig config() const {
    ScorerConfig c(parse_scorer_id(id));
    c.temperature = temperature;
    if (shrinkage) c.shrinkage = *shrinkage;
    c.subspace_dim = subspace_dim;
    c.validate();
    return c;
  }
};

std::string require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw UsageError(std::string("--out is required (") + what + ")");
  return g.out;
}

int jobs_of(const Globals& g) {
  if (g.jobs > 0) return g.jobs;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time augmentation OOD scoring toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random draw")->default_val(0);
  app.add_option("--jobs", g.jobs, "worker threads (0 = all cores)")->default_val(1);
  app.add_option("--out", g.out, "output path");

  // augment
  auto* augment = app.add_subcommand("augment", "augment an image folder");
  std::string aug_in, aug_spec = "none";
  augment->add_option("in_dir", aug_in)->required();
  augment->add_option("--spec", aug_spec, "e.g. hflip+jitter(b=0.8:1.2)");

  // fit
  auto* fit = app.add_subcommand("fit", "fit a feature-based scorer");
  ScorerFlags fit_flags;
  fit_flags.add(fit);
  std::string fit_train;
  std::optional<std::string> fit_head;
  fit->add_option("--train", fit_train, "train pack directory")->required();
  fit->add_option("--head", fit_head, "classifier head directory");

  // score
  auto* score = app.add_subcommand("score", "score a pack");
  ScorerFlags score_flags;
  score_flags.add(score);
  std::string score_pack_dir;
  std::optional<std::string> score_archive;
  score->add_option("--pack", score_pack_dir)->required();
  score->add_option("--archive", score_archive, "fitted scorer archive");

  // eval
  auto* eval = app.add_subcommand("eval", "AUROC and FPR at a TPR target");
  std::string eval_id, eval_ood;
  std::optional<std::string> eval_labels;
  double eval_tpr = kDefaultTprTarget;
  eval->add_option("--id", eval_id, "ID score CSV")->required();
  eval->add_option("--ood", eval_ood, "OOD score CSV")->required();
  eval->add_option("--labels", eval_labels, "OOD pack dir or sample_id,label CSV");
  eval->add_option("--tpr", eval_tpr)->default_val(kDefaultTprTarget);

  // grid
  auto* grid = app.add_subcommand("grid", "evaluate every view x scorer cell of a manifest");
  std::string grid_manifest;
  grid->add_option("manifest", grid_manifest)->required();

  // synth
  auto* synth = app.add_subcommand("synth", "write synthetic packs, head and grid manifest");
  SynthConfig sc;
  std::vector<std::string> synth_scorers = {"msp", "maxlogit", "energy", "mahalanobis", "vim"};
  synth->add_option("--feature-dim", sc.feature_dim)->default_val(sc.feature_dim);
  synth->add_option("--classes", sc.num_classes)->default_val(sc.num_classes);
  synth->add_option("--n-per-class", sc.n_per_class)->default_val(sc.n_per_class);
  synth->add_option("--n-ood", sc.n_ood)->default_val(sc.n_ood);
  synth->add_option("--id-spread", sc.id_spread)->default_val(sc.id_spread);
  synth->add_option("--ood-offset", sc.ood_offset)->default_val(sc.ood_offset);
  synth->add_option("--drift-id", sc.drift_id)->default_val(sc.drift_id);
  synth->add_option("--drift-ood", sc.drift_ood)->default_val(sc.drift_ood);
  synth->add_option("--scorers", synth_scorers, "scorers listed in the manifest")->delimiter(',');

  // validate-pack
  auto* validate = app.add_subcommand("validate-pack", "check pack invariants and head agreement");
  std::string val_pack;
  std::optional<std::string> val_head;
  double val_tol = 1e-4;
  validate->add_option("pack", val_pack)->required();
  validate->add_option("--head", val_head);
  validate->add_option("--tol", val_tol)->default_val(1e-4);

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*augment) {
      const auto summary = augment_directory(aug_in, require_out(g, "output directory"), aug_spec, g.seed, jobs_of(g));
      for (const auto& w : summary.skipped) std::cerr << "warning: skipped " << w << "\n";
      std::cout << "wrote " << summary.written << " images\n";
      if (!summary.skipped.empty()) {
        std::cerr << summary.skipped.size() << " unreadable images skipped\n";
        return static_cast<int>(ErrorKind::Data);
      }
    } else if (*fit) {
      std::optional<fs::path> head;
      if (fit_head) head = *fit_head;
      const auto archive = run_fit(fit_flags.config(), fit_train, head, require_out(g, "archive directory"));
      std::cout << describe_fit(archive);
    } else if (*score) {
      std::optional<fs::path> archive;
      if (score_archive) archive = *score_archive;
      const auto scores =
          run_score(score_flags.config(), score_pack_dir, archive, require_out(g, "score CSV"), jobs_of(g));
      std::cout << "scored " << scores.scores.size() << " samples\n";
    } else if (*eval) {
      std::optional<fs::path> labels;
      if (eval_labels) labels = *eval_labels;
      const auto report = run_eval(eval_id, eval_ood, labels, eval_tpr, require_out(g, "report JSON"));
      std::cout << "auroc " << format_exact(report.auroc) << "\nfpr " << format_exact(report.fpr_at_tpr) << "\n";
    } else if (*grid) {
      RunManifest manifest = load_manifest(grid_manifest);
      if (!g.out.empty()) manifest.out = g.out;
      const auto result = run_grid(manifest, jobs_of(g));
      write_grid_outputs(result);
      std::cout << render_grid_text(result);
    } else if (*synth) {
      sc.seed = g.seed;
      std::vector<ScorerConfig> scorers;
      for (const auto& s : synth_scorers) scorers.emplace_back(parse_scorer_id(s));
      write_synth(sc, require_out(g, "output directory"), scorers);
      std::cout << "wrote synthetic packs to " << g.out << "\n";
    } else if (*validate) {
      std::optional<fs::path> head;
      if (val_head) head = *val_head;
      const auto check = validate_pack_dir(val_pack, head, val_tol);
      std::cout << "ok: n=" << check.n << " m=" << check.m << " classes=" << check.num_classes;
      if (check.max_logit_deviation) std::cout << " max_logit_deviation=" << format_exact(*check.max_logit_deviation);
      std::cout << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Data);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Data);
  }
  return 0;
}
