#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "carenet/chemometrics.hpp"
#include "carenet/clustering.hpp"
#include "carenet/dataset.hpp"
#include "carenet/evaluation.hpp"
#include "carenet/gradcam.hpp"
#include "carenet/model.hpp"
#include "carenet/pipeline.hpp"
#include "carenet/spectral.hpp"
#include "carenet/synthgen.hpp"

namespace py = pybind11;
using namespace carenet;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::span<const double> as_span(const DArray& a) {
  if (a.ndim() != 1) throw InvalidArgument("expected a 1-D array");
  return {a.data(), static_cast<std::size_t>(a.size())};
}

RowMatrix as_matrix(const DArray& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D array");
  return Eigen::Map<const RowMatrix>(a.data(), a.shape(0), a.shape(1));
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<float> tensor_to_array(const nn::Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy_n(t.data(), t.size(), out.mutable_data());
  return out;
}

nn::Tensor<float> spectra_tensor(const FArray& x) {
  if (x.ndim() != 2) throw InvalidArgument("spectra must be a 2-D (n, points) array");
  nn::Tensor<float> t({static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)), 1});
  std::copy_n(x.data(), x.size(), t.data());
  return t;
}

py::dict set_to_dict(const SpectraSet& s) {
  py::dict d;
  py::array_t<float> spectra({static_cast<py::ssize_t>(s.size()), static_cast<py::ssize_t>(s.points())});
  std::copy(s.spectra.begin(), s.spectra.end(), spectra.mutable_data());
  d["spectra"] = spectra;
  d["wavenumbers"] = to_array(s.axis.values());
  d["patient_id"] = to_array(s.patient_id);
  d["core_id"] = to_array(s.core_id);
  d["row"] = to_array(s.row);
  d["col"] = to_array(s.col);
  d["core_type"] = to_array(s.core_type);
  d["subtype"] = to_array(s.subtype);
  return d;
}

template <typename T>
std::vector<T> column(const py::dict& d, const char* key) {
  auto a = py::cast<py::array_t<T, py::array::c_style | py::array::forcecast>>(d[key]);
  return std::vector<T>(a.data(), a.data() + a.size());
}

SpectraSet dict_to_set(const py::dict& d) {
  SpectraSet s;
  const auto wn = column<double>(d, "wavenumbers");
  if (wn.size() < 2) throw InvalidArgument("wavenumbers needs at least 2 points");
  s.axis = build_axis(wn.front(), wn.back(), wn.size());
  s.spectra = column<float>(d, "spectra");
  s.patient_id = column<std::int32_t>(d, "patient_id");
  s.core_id = column<std::int32_t>(d, "core_id");
  s.row = column<std::int32_t>(d, "row");
  s.col = column<std::int32_t>(d, "col");
  s.core_type = column<std::uint8_t>(d, "core_type");
  s.subtype = column<std::uint8_t>(d, "subtype");
  s.validate();
  return s;
}

SynthConfig synth_from_kwargs(const py::kwargs& kw) {
  SynthConfig c;
  for (const auto& [k, v] : kw) {
    const auto key = py::cast<std::string>(k);
    if (key == "patients_per_subtype") c.patients_per_subtype = py::cast<std::array<int, 4>>(v);
    else if (key == "rows") c.rows = py::cast<std::size_t>(v);
    else if (key == "cols") c.cols = py::cast<std::size_t>(v);
    else if (key == "seed") c.seed = py::cast<std::uint64_t>(v);
    else if (key == "class_separation") c.class_separation = py::cast<double>(v);
    else if (key == "noise_sigma") c.noise_sigma = py::cast<double>(v);
    else if (key == "spike_fraction") c.spike_fraction = py::cast<double>(v);
    else if (key == "discriminative_band") {
      const auto b = py::cast<std::pair<double, double>>(v);
      c.discriminative_band = Band{b.first, b.second};
    } else {
      throw InvalidArgument("unknown synth option '" + key + "'");
    }
  }
  c.validate();
  return c;
}

class PyModel {
 public:
  PyModel(const std::string& head, std::uint64_t seed) : model_(make(head, seed)) {}
  explicit PyModel(CarenetModel m) : model_(std::move(m)) {}

  static PyModel load(const std::filesystem::path& p) { return PyModel(load_checkpoint(p).model); }
  void save(const std::filesystem::path& p) { save_checkpoint(model_, p); }

  std::string head() const { return std::string(to_string(model_.head())); }
  std::size_t parameter_count() { return model_.parameter_count(); }

  py::array_t<float> predict(const FArray& x) {
    const auto t = spectra_tensor(x);
    nn::Tensor<float> p;
    {
      py::gil_scoped_release release;
      p = carenet::predict(model_, t);
    }
    return tensor_to_array(p);
  }

  py::array_t<double> gradcam(const FArray& x, const std::vector<int>& targets) {
    const auto t = spectra_tensor(x);
    const auto maps = gradcam_batch(model_, t, targets);
    py::array_t<double> out({static_cast<py::ssize_t>(maps.size()), static_cast<py::ssize_t>(t.dim(1))});
    for (std::size_t i = 0; i < maps.size(); ++i) {
      std::copy(maps[i].begin(), maps[i].end(), out.mutable_data() + i * t.dim(1));
    }
    return out;
  }

 private:
  static CarenetModel make(const std::string& head, std::uint64_t seed) {
    CarenetConfig c;
    c.head = parse_head(head);
    return build_carenet<float>(c, seed);
  }
  CarenetModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "C++ core of the carenet package";

  static py::exception<Error> base(m, "CarenetError", PyExc_RuntimeError);
  static py::exception<FormatError> format(m, "FormatError", base.ptr());
  static py::exception<DegenerateInput> degenerate(m, "DegenerateInput", base.ptr());
  static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const FormatError& e) {
      py::set_error(format, e.what());
    } catch (const DegenerateInput& e) {
      py::set_error(degenerate, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("biofingerprint_axis", [] {
    SynthConfig c;
    const auto [first, last] = c.axis().band_indices(1800.0, 900.0);
    return to_array(c.axis().sub_axis(first, last).values());
  }, "Wavenumbers of the 1800-900 cm^-1 model input (467 points, descending).");

  m.def("savitzky_golay", [](const DArray& y, std::size_t window, std::size_t order) {
    return to_array(SavitzkyGolay(window, order).apply(as_span(y)));
  }, py::arg("y"), py::arg("window") = 11, py::arg("order") = 2);

  m.def("minmax_normalize", [](const DArray& y) {
    auto s = as_span(y);
    std::vector<double> v(s.begin(), s.end());
    minmax_normalize_inplace(v);
    return to_array(v);
  }, py::arg("y"));

  m.def("remove_outliers", [](const DArray& x, std::size_t n_pcs, double confidence) {
    const auto r = remove_outliers(as_matrix(x), n_pcs, confidence);
    return to_array(std::vector<std::int64_t>(r.kept_indices.begin(), r.kept_indices.end()));
  }, py::arg("x"), py::arg("n_pcs") = 10, py::arg("confidence") = 0.95,
     "Indices of the rows kept by the Hotelling T2 / Q residual filter.");

  m.def("kmeans", [](const DArray& x, int k, std::uint64_t seed) {
    const auto r = kmeans(as_matrix(x), k, seed);
    return py::make_tuple(to_array(r.assignments), r.wcss_history.empty() ? 0.0 : r.wcss_history.back());
  }, py::arg("x"), py::arg("k"), py::arg("seed") = 0);

  m.def("count_params", [](const std::string& head) {
    CarenetConfig c;
    c.head = parse_head(head);
    return count_params(c);
  }, py::arg("head"));

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("head"), py::arg("seed") = 0)
      .def_static("load", &PyModel::load, py::arg("path"))
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("head", &PyModel::head)
      .def("parameter_count", &PyModel::parameter_count)
      .def("predict", &PyModel::predict, py::arg("spectra"), "Probabilities for (n, 467) spectra.")
      .def("gradcam", &PyModel::gradcam, py::arg("spectra"), py::arg("targets"),
           "Raw non-negative Grad-CAM importance, one row per spectrum.");

  m.def("gen_panel", [](py::kwargs kw) {
    const SynthConfig cfg = synth_from_kwargs(kw);
    const SynthPanel panel = gen_panel(cfg);
    py::list cores;
    for (const auto& c : panel.cores) {
      py::dict d;
      py::array_t<float> cube({static_cast<py::ssize_t>(c.cube.rows), static_cast<py::ssize_t>(c.cube.cols),
                               static_cast<py::ssize_t>(c.cube.axis.size())});
      std::copy(c.cube.intensities.begin(), c.cube.intensities.end(), cube.mutable_data());
      d["cube"] = cube;
      py::array_t<std::uint8_t> gt({static_cast<py::ssize_t>(c.cube.rows), static_cast<py::ssize_t>(c.cube.cols)});
      std::copy(c.ground_truth.begin(), c.ground_truth.end(), gt.mutable_data());
      d["ground_truth"] = gt;
      d["patient_id"] = c.cube.patient_id;
      d["core_id"] = c.cube.core_id;
      d["core_type"] = std::string(to_string(c.cube.core_type));
      d["subtype"] = std::string(to_string(c.cube.subtype));
      cores.append(d);
    }
    py::dict out;
    out["cores"] = cores;
    out["wavenumbers"] = to_array(cfg.axis().values());
    return out;
  }, "Synthetic panel; keyword options mirror the synth config keys.");

  m.def("preprocess_panel", [](py::kwargs kw) {
    const SynthConfig cfg = synth_from_kwargs(kw);
    SpectraSet all;
    {
      py::gil_scoped_release release;
      const SynthPanel panel = gen_panel(cfg);
      const auto env = preprocess_environment(panel.environment);
      all.axis = env.axis;
      for (const auto& c : panel.cores) all.append(preprocess_core(c.cube, env).spectra);
    }
    return set_to_dict(all);
  }, "Generates a synthetic panel and runs the full preprocessing chain.");

  m.def("read_spectraset", [](const std::filesystem::path& p) { return set_to_dict(read_spectraset(p)); },
        py::arg("path"));
  m.def("write_spectraset", [](const py::dict& d, const std::filesystem::path& p) {
    write_spectraset(dict_to_set(d), p);
  }, py::arg("data"), py::arg("path"));

  m.def("make_split", [](const py::dict& d, std::uint64_t seed, std::size_t n_folds) {
    const auto plan = make_split(patients_from_set(dict_to_set(d)), seed, n_folds);
    return py::module_::import("json").attr("loads")(to_json(plan).dump());
  }, py::arg("data"), py::arg("seed"), py::arg("n_folds") = 4);

  m.def("classify", [](const std::vector<float>& probs) {
    const auto r = probs.size() == 1 ? classify_binary(probs[0]) : classify_probs(probs);
    return py::make_tuple(r.cls, r.tie);
  }, py::arg("probs"), "(class, tie) for one binary or multi-class probability vector.");

  m.def("patient_vote", [](const std::vector<int>& classes, const std::vector<std::vector<double>>& probs,
                           int n_classes) {
    const auto r = patient_vote(0, classes, probs, n_classes);
    return py::make_tuple(r.final_class, r.tie, r.votes);
  }, py::arg("classes"), py::arg("probabilities"), py::arg("n_classes"));

  m.def("compute_metrics", [](const std::vector<int>& pred, const std::vector<int>& truth, int cls) {
    const auto r = compute_metrics(pred, truth, cls);
    py::dict d;
    const auto opt = [](const std::optional<double>& v) -> py::object {
      return v ? py::cast(*v) : py::none();
    };
    d["accuracy"] = opt(r.accuracy);
    d["specificity"] = opt(r.specificity);
    d["sensitivity"] = opt(r.sensitivity);
    d["tp"] = r.counts.tp;
    d["fp"] = r.counts.fp;
    d["tn"] = r.counts.tn;
    d["fn"] = r.counts.fn;
    return d;
  }, py::arg("predictions"), py::arg("truths"), py::arg("cls"));

  m.def("top_bands", [](const DArray& heatmap, double threshold) {
    const auto s = as_span(heatmap);
    SynthConfig c;
    const auto [first, last] = c.axis().band_indices(1800.0, 900.0);
    const auto axis = c.axis().sub_axis(first, last);
    py::list out;
    for (const auto& b : top_bands(s, axis, threshold)) out.append(py::make_tuple(b.high_wn, b.low_wn, b.peak));
    return out;
  }, py::arg("heatmap"), py::arg("threshold"));
}
