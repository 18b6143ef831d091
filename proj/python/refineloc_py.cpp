#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "refineloc/config.hpp"
#include "refineloc/dataio.hpp"
#include "refineloc/errors.hpp"
#include "refineloc/evalkit.hpp"
#include "refineloc/pseudogen.hpp"
#include "refineloc/refine.hpp"
#include "refineloc/segpred.hpp"
#include "refineloc/wstal.hpp"

namespace py = pybind11;
using namespace refineloc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), a.mutable_data());
  return a;
}

Array to_array(const std::vector<double>& v) {
  Array a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

py::array_t<std::uint8_t> to_array(const std::vector<std::uint8_t>& v) {
  py::array_t<std::uint8_t> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<std::uint8_t> to_mask(const py::array_t<std::uint8_t, py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::dict maps_to_dict(const ForwardMaps& f) {
  py::dict d;
  d["C"] = to_array(f.C);
  d["A"] = to_array(f.A);
  d["Cbar"] = to_array(f.Cbar);
  d["Abf"] = to_array(f.Abf);
  d["Atime"] = to_array(f.Atime);
  d["yhat"] = to_array(f.yhat);
  return d;
}

ForwardMaps forward_array(const Model& m, const Array& F) { return m.forward(to_matrix(F)); }

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["thresholds"] = r.thresholds;
  d["map_per_threshold"] = r.map_per_threshold;
  d["average_map"] = r.average_map;
  d["per_class_ap"] = r.per_class_ap;
  const auto& e = r.error_breakdown;
  d["error_breakdown"] = py::dict(py::arg("true_positive") = e.true_positive,
                                  py::arg("localization") = e.localization,
                                  py::arg("confusion") = e.confusion,
                                  py::arg("background") = e.background,
                                  py::arg("double_detection") = e.double_detection,
                                  py::arg("other") = e.other);
  return d;
}

}  // namespace

PYBIND11_MODULE(_refineloc, m) {
  m.doc() = "Weakly-supervised temporal action localization with pseudo-label refinement.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](int D, int N, int L, const std::string& attention, std::uint64_t init_seed) {
             return ModelConfig{D, N, L, parse_attention_variant(attention), init_seed};
           }),
           py::arg("D"), py::arg("N"), py::arg("L") = 2, py::arg("attention") = "two_logit",
           py::arg("init_seed") = 0)
      .def_readwrite("D", &ModelConfig::D)
      .def_readwrite("N", &ModelConfig::N)
      .def_readwrite("L", &ModelConfig::L)
      .def_readwrite("init_seed", &ModelConfig::init_seed)
      .def_property_readonly("head_width", &ModelConfig::head_width);

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&>())
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("param_count", &Model::param_count)
      .def("param_names",
           [](const Model& self) {
             std::vector<std::string> names;
             for (const auto& p : self.params()) names.push_back(p.name);
             return names;
           })
      .def("param", [](const Model& self, const std::string& name) { return to_array(self.param(name).value); })
      .def("forward", [](const Model& self, const Array& F) { return maps_to_dict(forward_array(self, F)); },
           py::arg("features"))
      .def("loss",
           [](const Model& self, const Array& F, const std::vector<double>& y, double beta,
              std::optional<std::vector<std::uint8_t>> labels, std::optional<std::vector<std::uint8_t>> mask) {
             if (!labels) return evaluate_loss(self, to_matrix(F), y, nullptr, beta);
             PseudoLabels p{"", *labels, mask ? *mask : std::vector<std::uint8_t>(labels->size(), 1)};
             return evaluate_loss(self, to_matrix(F), y, &p, beta);
           },
           py::arg("features"), py::arg("y"), py::arg("beta") = 0.0, py::arg("labels") = py::none(),
           py::arg("mask") = py::none())
      .def("save", [](const Model& self, const std::filesystem::path& p) { save_checkpoint(self, 0, p); });

  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p).model; });

  m.def("predict_segments",
        [](const Model& model, const Array& F, double alpha_A, double alpha_C, int top_k,
           const std::string& video_id) {
          PostprocConfig cfg;
          cfg.alpha_A = alpha_A;
          cfg.alpha_C = alpha_C;
          cfg.top_k = top_k;
          cfg.validate();
          py::list out;
          for (const auto& p : predict_segments(forward_array(model, F), cfg, video_id)) {
            out.append(py::dict(py::arg("video_id") = p.video_id, py::arg("start") = p.start,
                                py::arg("end") = p.end, py::arg("class_id") = p.class_id,
                                py::arg("score") = p.score));
          }
          return out;
        },
        py::arg("model"), py::arg("features"), py::arg("alpha_A") = 0.5, py::arg("alpha_C") = 0.005,
        py::arg("top_k") = 2, py::arg("video_id") = "");

  m.def("group_segments",
        [](const py::array_t<std::uint8_t, py::array::forcecast>& mask, int gap) {
          std::vector<std::pair<int, int>> out;
          for (auto s : group_segments(to_mask(mask), gap)) out.emplace_back(s.start, s.end);
          return out;
        },
        py::arg("mask"), py::arg("gap_tolerance") = 1);

  m.def("tiou", [](std::pair<int, int> a, std::pair<int, int> b) {
    return tiou({a.first, a.second}, {b.first, b.second});
  });

  m.def("sample_pseudo", [](int T, double S, std::uint64_t seed) { return to_array(sample_pseudo(T, S, seed)); },
        py::arg("T"), py::arg("S"), py::arg("seed"));
  m.def("gen_uniform", [](int T, std::uint64_t seed) { return to_array(gen_uniform(T, seed)); });
  m.def("gen_distribution_aware",
        [](int T, double ratio, std::uint64_t seed) { return to_array(gen_distribution_aware(T, ratio, seed)); });

  m.def("generate_synthetic",
        [](const std::filesystem::path& out_dir, std::uint64_t seed, int N, int D, int video_count,
           double noise_sigma) {
          SyntheticConfig cfg;
          cfg.seed = seed;
          cfg.N = N;
          cfg.D = D;
          cfg.video_count = video_count;
          cfg.noise_sigma = noise_sigma;
          cfg.validate();
          return generate_synthetic(cfg, out_dir).videos.size();
        },
        py::arg("out_dir"), py::arg("seed") = 0, py::arg("N") = 5, py::arg("D") = 32, py::arg("video_count") = 300,
        py::arg("noise_sigma") = 1.0);

  m.def("load_features", [](const std::filesystem::path& manifest_path, const std::string& video_id) {
    const DatasetManifest mf = load_manifest(manifest_path);
    const VideoRecord* v = mf.find(video_id);
    if (!v) throw SchemaError("unknown video id " + video_id);
    return to_array(load_features(*v, mf.root));
  });

  m.def("evaluate_files",
        [](const std::filesystem::path& predictions, const std::filesystem::path& manifest) {
          return report_to_dict(evaluate(read_predictions(predictions), load_manifest(manifest, false)));
        },
        py::arg("predictions"), py::arg("manifest"));

  m.def("refine",
        [](const std::filesystem::path& config_path, const std::filesystem::path& manifest_path,
           std::optional<std::uint64_t> seed) {
          RunConfig cfg = load_run_config(config_path);
          if (seed) cfg.set_seed(*seed);
          const Dataset data = load_dataset(manifest_path);
          RefineResult res = [&] {
            py::gil_scoped_release release;
            return refine_loop(data, cfg.refine);
          }();
          py::list reports;
          for (const auto& r : res.reports) {
            py::dict d;
            d["eta"] = r.eta;
            d["best_epoch"] = r.best_epoch;
            d["val_loss"] = r.val_loss;
            d["average_map"] = r.average_map();
            if (r.eval) d["eval"] = report_to_dict(*r.eval);
            reports.append(d);
          }
          return py::make_tuple(reports, std::move(res.final_model));
        },
        py::arg("config"), py::arg("manifest"), py::arg("seed") = py::none());
}
