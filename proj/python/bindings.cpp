#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ttaood/archive.hpp"
#include "ttaood/augment.hpp"
#include "ttaood/error.hpp"
#include "ttaood/metrics.hpp"
#include "ttaood/pack.hpp"
#include "ttaood/pipeline.hpp"
#include "ttaood/scoring.hpp"
#include "ttaood/synth.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace ttaood;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

F32 to_numpy(const MatrixF& m) {
  F32 out({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), out.mutable_data());
  return out;
}

MatrixF from_numpy(const F32& a, const char* what) {
  if (a.ndim() != 2) throw UsageError(std::string(what) + " must be a 2-d array");
  MatrixF m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::span<const double> span_of(const F64& a) {
  if (a.ndim() != 1) throw UsageError("score arrays must be 1-d");
  return {a.data(), static_cast<std::size_t>(a.size())};
}

ScorerConfig make_config(const std::string& scorer, std::optional<double> temperature, double shrinkage,
                         std::optional<int> subspace_dim) {
  ScorerConfig c(parse_scorer_id(scorer));
  c.temperature = temperature;
  c.shrinkage = shrinkage;
  c.subspace_dim = subspace_dim;
  c.validate();
  return c;
}

py::dict pack_to_dict(const FeaturePack& p) {
  py::list labels;
  for (const auto& l : p.labels) {
    if (l.is_id()) labels.append(l.class_index());
    else labels.append(l.tag());
  }
  py::dict d;
  d["sample_ids"] = p.sample_ids;
  d["labels"] = labels;
  d["features"] = to_numpy(p.features);
  d["logits"] = to_numpy(p.logits);
  d["view"] = p.view;
  d["split"] = to_string(p.split);
  d["model_id"] = p.model_id;
  return d;
}

ImageBuffer image_from_numpy(const U8& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw UsageError("image must be an H x W x 3 uint8 array");
  ImageBuffer img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

U8 image_to_numpy(const ImageBuffer& img) {
  U8 out({img.height, img.width, 3});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ttaood native core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  // packs and heads
  m.def("read_pack", [](const fs::path& dir) { return pack_to_dict(read_pack(dir)); }, py::arg("dir"));
  m.def(
      "write_pack",
      [](const fs::path& dir, const F32& features, const F32& logits, std::vector<std::string> sample_ids,
         const py::list& labels, const std::string& split, std::string view, std::string model_id) {
        FeaturePack p;
        p.features = from_numpy(features, "features");
        p.logits = from_numpy(logits, "logits");
        p.sample_ids = std::move(sample_ids);
        for (const auto& l : labels) {
          if (py::isinstance<py::int_>(l)) p.labels.push_back(Label::id_class(l.cast<int>()));
          else p.labels.push_back(Label::ood_tag(l.cast<std::string>()));
        }
        p.split = parse_split(split);
        p.view = std::move(view);
        p.model_id = std::move(model_id);
        write_pack(p, dir);
      },
      py::arg("dir"), py::arg("features"), py::arg("logits"), py::arg("sample_ids"), py::arg("labels"),
      py::arg("split"), py::arg("view") = "none", py::arg("model_id") = "");
  m.def(
      "read_head",
      [](const fs::path& dir) {
        const auto h = read_head(dir);
        F32 bias(h.bias.size());
        std::copy(h.bias.data(), h.bias.data() + h.bias.size(), bias.mutable_data());
        return py::make_tuple(to_numpy(h.weights), bias);
      },
      py::arg("dir"));
  m.def(
      "write_head",
      [](const fs::path& dir, const F32& weights, const F32& bias) {
        ClassifierHead h;
        h.weights = from_numpy(weights, "weights");
        if (bias.ndim() != 1) throw UsageError("bias must be a 1-d array");
        h.bias = Eigen::Map<const VectorF>(bias.data(), bias.size());
        write_head(h, dir);
      },
      py::arg("dir"), py::arg("weights"), py::arg("bias"));
  m.def(
      "validate_pack",
      [](const fs::path& pack, std::optional<fs::path> head, double tol) {
        const auto c = validate_pack_dir(pack, head, tol);
        py::dict d;
        d["n"] = c.n;
        d["feature_dim"] = c.m;
        d["num_classes"] = c.num_classes;
        d["max_logit_deviation"] = c.max_logit_deviation;
        return d;
      },
      py::arg("pack"), py::arg("head") = std::nullopt, py::arg("tol") = 1e-4);

  // scorers
  m.def("scorers", [] {
    std::vector<std::string> out;
    for (auto id : all_scorers()) out.push_back(to_string(id));
    return out;
  });
  m.def(
      "score_logits",
      [](const std::string& scorer, const F64& logits, std::optional<double> temperature) {
        const auto cfg = make_config(scorer, temperature, kDefaultShrinkage, std::nullopt);
        if (requires_fit(cfg.id)) throw UsageError(scorer + " scores features, not logits");
        if (logits.ndim() != 2) throw UsageError("logits must be a 2-d array");
        const auto n = logits.shape(0), c = logits.shape(1);
        F64 out(n);
        for (py::ssize_t i = 0; i < n; ++i) {
          std::span<const double> row(logits.data() + i * c, static_cast<std::size_t>(c));
          double s = 0.0;
          switch (cfg.id) {
            case ScorerId::Msp: s = score_msp(row); break;
            case ScorerId::Entropy: s = score_entropy(row); break;
            case ScorerId::MaxLogit: s = score_maxlogit(row); break;
            case ScorerId::Energy: s = score_energy(row, cfg.effective_temperature()); break;
            case ScorerId::Odin: s = score_odin(row, cfg.effective_temperature()); break;
            default: break;
          }
          out.mutable_data()[i] = s;
        }
        return out;
      },
      py::arg("scorer"), py::arg("logits"), py::arg("temperature") = std::nullopt);
  m.def(
      "fit",
      [](const std::string& scorer, const fs::path& train, const fs::path& out, std::optional<fs::path> head,
         double shrinkage, std::optional<int> subspace_dim) {
        return describe_fit(run_fit(make_config(scorer, std::nullopt, shrinkage, subspace_dim), train, head, out));
      },
      py::arg("scorer"), py::arg("train"), py::arg("out"), py::arg("head") = std::nullopt,
      py::arg("shrinkage") = kDefaultShrinkage, py::arg("subspace_dim") = std::nullopt);
  m.def(
      "score_pack",
      [](const std::string& scorer, const fs::path& pack, std::optional<fs::path> archive,
         std::optional<double> temperature, int jobs) {
        const auto cfg = make_config(scorer, temperature, kDefaultShrinkage, std::nullopt);
        const auto p = read_pack(pack);
        std::optional<FittedScorerArchive> fitted;
        if (archive) fitted = read_archive(*archive);
        if (requires_fit(cfg.id) && !fitted) throw UsageError(scorer + " needs a fitted archive");
        const auto f = score_pack(cfg, p, fitted ? &*fitted : nullptr, jobs);
        return py::make_tuple(f.sample_ids, F64(static_cast<py::ssize_t>(f.scores.size()), f.scores.data()));
      },
      py::arg("scorer"), py::arg("pack"), py::arg("archive") = std::nullopt, py::arg("temperature") = std::nullopt,
      py::arg("jobs") = 1);

  // metrics
  m.def("auroc", [](const F64& id, const F64& ood) { return auroc(span_of(id), span_of(ood)); }, py::arg("id"),
        py::arg("ood"));
  m.def(
      "fit_threshold", [](const F64& id, double tpr) { return fit_threshold(span_of(id), tpr); }, py::arg("id"),
      py::arg("tpr") = kDefaultTprTarget);
  m.def(
      "fpr_at_tpr", [](const F64& id, const F64& ood, double tpr) { return fpr_at_tpr(span_of(id), span_of(ood), tpr); },
      py::arg("id"), py::arg("ood"), py::arg("tpr") = kDefaultTprTarget);
  m.def(
      "evaluate",
      [](const fs::path& id_csv, const fs::path& ood_csv, const fs::path& out_json, std::optional<fs::path> labels,
         double tpr) { return json_to_py(to_json(run_eval(id_csv, ood_csv, labels, tpr, out_json))); },
      py::arg("id_csv"), py::arg("ood_csv"), py::arg("out"), py::arg("labels") = std::nullopt,
      py::arg("tpr") = kDefaultTprTarget);

  // augmentation
  m.def("normalize_spec", [](const std::string& text) { return render_spec(parse_spec(text)); }, py::arg("spec"));
  m.def(
      "augment_image",
      [](const std::string& spec, const U8& image, std::uint64_t seed, std::uint64_t stream) {
        return image_to_numpy(apply(parse_spec(spec), image_from_numpy(image), seed, stream));
      },
      py::arg("spec"), py::arg("image"), py::arg("seed") = 0, py::arg("stream") = 0);
  m.def(
      "augment_dir",
      [](const fs::path& in, const fs::path& out, const std::string& spec, std::uint64_t seed, int jobs) {
        const auto s = augment_directory(in, out, spec, seed, jobs);
        return py::make_tuple(s.written, s.skipped);
      },
      py::arg("in_dir"), py::arg("out_dir"), py::arg("spec"), py::arg("seed") = 0, py::arg("jobs") = 1);

  // synth and grid
  m.def(
      "synth",
      [](const fs::path& out, std::uint64_t seed, int feature_dim, int classes, int n_per_class, int n_ood,
         double id_spread, double ood_offset, double drift_id, double drift_ood, std::vector<std::string> scorers) {
        SynthConfig c;
        c.seed = seed;
        c.feature_dim = feature_dim;
        c.num_classes = classes;
        c.n_per_class = n_per_class;
        c.n_ood = n_ood;
        c.id_spread = id_spread;
        c.ood_offset = ood_offset;
        c.drift_id = drift_id;
        c.drift_ood = drift_ood;
        std::vector<ScorerConfig> cfgs;
        for (const auto& s : scorers) cfgs.emplace_back(parse_scorer_id(s));
        write_synth(c, out, cfgs);
      },
      py::arg("out"), py::arg("seed") = 0, py::arg("feature_dim") = SynthConfig{}.feature_dim,
      py::arg("classes") = SynthConfig{}.num_classes, py::arg("n_per_class") = SynthConfig{}.n_per_class,
      py::arg("n_ood") = SynthConfig{}.n_ood, py::arg("id_spread") = SynthConfig{}.id_spread,
      py::arg("ood_offset") = SynthConfig{}.ood_offset, py::arg("drift_id") = SynthConfig{}.drift_id,
      py::arg("drift_ood") = SynthConfig{}.drift_ood,
      py::arg("scorers") = std::vector<std::string>{"msp", "maxlogit", "energy", "mahalanobis", "vim"});
  m.def(
      "grid",
      [](const fs::path& manifest, int jobs, std::optional<fs::path> out) {
        auto mf = load_manifest(manifest);
        if (out) mf.out = *out;
        const auto r = run_grid(mf, jobs);
        write_grid_outputs(r);
        return render_grid_text(r);
      },
      py::arg("manifest"), py::arg("jobs") = 1, py::arg("out") = std::nullopt);
}
