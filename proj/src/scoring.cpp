#include "ttaood/scoring.hpp"

#include <vector>

#include "ttaood/error.hpp"
#include "ttaood/parallel.hpp"

namespace ttaood {
using nlohmann::json;

FittedScorerArchive fit_scorer(const ScorerConfig& config, const FeaturePack& train,
                               const ClassifierHead* head) {
  config.validate();
  if (!requires_fit(config.id)) {
    throw UsageError(to_string(config.id) + " requires no fitting");
  }
  FittedScorerArchive archive;
  archive.scorer = config.id;
  archive.feature_dim = train.feature_dim();
  archive.num_classes = train.num_classes();
  archive.hyperparameters = config_echo(config, train.feature_dim());

  if (config.id == ScorerId::Mahalanobis) {
    archive.payload = fit_mahalanobis(train, config.shrinkage);
  } else {
    if (head == nullptr) throw UsageError("vim requires a classifier head (--head)");
    archive.payload = fit_vim(train, *head, config.effective_subspace_dim(train.feature_dim()));
  }
  return archive;
}

ScoreFile score_pack(const ScorerConfig& config, const FeaturePack& pack,
                     const FittedScorerArchive* fitted, int jobs) {
  config.validate();
  pack.validate();
  if (requires_fit(config.id)) {
    if (fitted == nullptr) {
      throw UsageError(to_string(config.id) + " needs a fitted archive; run 'fit' first");
    }
    if (fitted->scorer != config.id) {
      throw UsageError("archive was fit for " + to_string(fitted->scorer) + ", not " +
                       to_string(config.id));
    }
    if (fitted->feature_dim != pack.feature_dim() || fitted->num_classes != pack.num_classes()) {
      throw DataError("dimension mismatch: archive has m=" + std::to_string(fitted->feature_dim) +
                      ", C=" + std::to_string(fitted->num_classes) + "; pack has m=" +
                      std::to_string(pack.feature_dim()) + ", C=" + std::to_string(pack.num_classes()));
    }
  }

  const auto n = static_cast<std::size_t>(pack.num_samples());
  const auto num_classes = static_cast<std::size_t>(pack.num_classes());
  const double temperature = config.effective_temperature();
  std::vector<double> scores(n);

  parallel_for(n, jobs, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::vector<double> logits(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      logits[c] = static_cast<double>(pack.logits(row, static_cast<Eigen::Index>(c)));
    }
    double s = 0.0;
    switch (config.id) {
      case ScorerId::Msp: s = score_msp(logits); break;
      case ScorerId::Entropy: s = score_entropy(logits); break;
      case ScorerId::MaxLogit: s = score_maxlogit(logits); break;
      case ScorerId::Energy: s = score_energy(logits, temperature); break;
      case ScorerId::Odin: s = score_odin(logits, temperature); break;
      case ScorerId::Mahalanobis: {
        const Eigen::VectorXd x = pack.features.row(row).transpose().cast<double>();
        s = score_mahalanobis(fitted->mahalanobis(), x);
        break;
      }
      case ScorerId::Vim: {
        const Eigen::VectorXd x = pack.features.row(row).transpose().cast<double>();
        s = score_vim(fitted->vim(), x, logits);
        break;
      }
    }
    if (!std::isfinite(s)) {
      throw NumericalError("non-finite " + to_string(config.id) + " score for sample '" +
                           pack.sample_ids[i] + "'");
    }
    scores[i] = s;
  });

  ScoreFile out;
  out.sample_ids = pack.sample_ids;
  out.scores = std::move(scores);
  out.scorer_id = to_string(config.id);
  out.view = pack.view;
  out.config = config_echo(config, pack.feature_dim());
  return out;
}

json config_echo(const ScorerConfig& config, std::optional<Eigen::Index> feature_dim) {
  json j{{"scorer_id", to_string(config.id)}};
  switch (config.id) {
    case ScorerId::Energy:
    case ScorerId::Odin:
      j["temperature"] = config.effective_temperature();
      if (config.id == ScorerId::Odin) j["input_perturbation"] = false;
      break;
    case ScorerId::Mahalanobis:
      j["shrinkage"] = config.shrinkage;
      j["covariance"] = "shared, 1/n, ridge = shrinkage * trace / m";
      j["distance"] = "min over classes";
      break;
    case ScorerId::Vim:
      if (feature_dim) {
        j["subspace_dim"] = config.effective_subspace_dim(*feature_dim);
      } else if (config.subspace_dim) {
        j["subspace_dim"] = *config.subspace_dim;
      } else {
        j["subspace_dim"] = "default: min(m/4, 256)";
      }
      break;
    default:
      break;
  }
  return j;
}

ScorerConfig scorer_config_from_json(const json& j) {
  if (j.is_string()) return ScorerConfig(parse_scorer_id(j.get<std::string>()));
  if (!j.is_object()) throw UsageError("scorer entry must be a string or an object");
  try {
    ScorerConfig config(parse_scorer_id(j.at("id").get<std::string>()));
    if (j.contains("temperature")) config.temperature = j.at("temperature").get<double>();
    if (j.contains("shrinkage")) config.shrinkage = j.at("shrinkage").get<double>();
    if (j.contains("subspace_dim")) config.subspace_dim = j.at("subspace_dim").get<int>();
    config.validate();
    return config;
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed scorer entry: ") + e.what());
  }
}

}  // namespace ttaood
