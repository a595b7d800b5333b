#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tgan/eval.hpp"
#include "tgan/io.hpp"
#include "tgan/train.hpp"

namespace py = pybind11;
using namespace tgan;
using nlohmann::json;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>&
                             arr) {
  Shape shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape.push_back(static_cast<int64_t>(arr.shape(i)));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return from_data(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (int64_t e : t.shape()) shape.push_back(static_cast<py::ssize_t>(e));
  py::array_t<double> arr(shape);
  std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
  return arr;
}

// ParamStore wrapper with value semantics for Python.
struct PyModel {
  ParamStore store;

  static PyModel build_from(const std::string& config, uint64_t seed) {
    ModelConfig mc;
    json j = json::parse(config, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
      mc = ModelConfig::preset(config);  // plain preset name
    } else if (j.is_string()) {
      mc = ModelConfig::preset(j.get<std::string>());
    } else {
      mc = config_from_json(j);
      mc.validate();
    }
    return {tgan::build(mc, seed)};
  }

  static PyModel load(const std::string& dir) {
    return {load_checkpoint(dir)};
  }

  void save(const std::string& dir) const { save_checkpoint(dir, store); }

  std::string config_json() const { return config_to_json(store.config).dump(); }

  py::array_t<double> generate(uint64_t seed, std::optional<int64_t> label,
                               int64_t factor) const {
    Rng rng(seed);
    Tensor z0 = sample_z0(store.config, 1, rng);
    VideoClip clip = interpolate_frames(store, z0, factor, label);
    return array_from_tensor(clip.frames);  // [T, C, H, W]
  }

  double discriminate_clip(const py::array_t<double, py::array::c_style |
                                                         py::array::forcecast>&
                               frames,
                           std::optional<int64_t> label) const {
    VideoClip clip;
    clip.frames = tensor_from_array(frames);
    clip.label = label;
    return discriminate(store, clip);
  }

  std::string certify() const { return compose_bound(store).to_json().dump(); }

  PyModel clipped() const { return {svc_apply(store)}; }
};

}  // namespace

PYBIND11_MODULE(_tgan, m) {
  m.doc() = "Temporal GAN core: autodiff tensors, SVC, training, evaluation";

  py::register_exception<ValueError>(m, "TganValueError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "TganNumericalError",
                                         PyExc_ArithmeticError);

  m.def(
      "svd",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>&
             w) {
        SvdResult r = svd(tensor_from_array(w));
        return py::make_tuple(array_from_tensor(r.u), array_from_tensor(r.s),
                              array_from_tensor(r.v));
      },
      py::arg("w"), "Thin SVD (U, S, V) with S descending");

  m.def(
      "spectral_norm",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>&
             w) { return spectral_norm(tensor_from_array(w)); },
      py::arg("w"));

  m.def(
      "power_iteration",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>&
             w,
         int max_iters, double tol, uint64_t seed) {
        PowerIterResult r =
            power_iteration(tensor_from_array(w), max_iters, tol, seed);
        return py::make_tuple(r.sigma, r.converged, r.iters);
      },
      py::arg("w"), py::arg("max_iters") = 1000, py::arg("tol") = 1e-12,
      py::arg("seed") = 0);

  m.def(
      "clip_singular_values",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>&
             w,
         double smax) {
        return array_from_tensor(
            clip_singular_values(tensor_from_array(w), smax));
      },
      py::arg("w"), py::arg("smax") = 1.0);

  m.def(
      "save_tensor",
      [](const std::string& path,
         const py::array_t<double, py::array::c_style | py::array::forcecast>&
             arr) { save_tensor(path, tensor_from_array(arr)); },
      py::arg("path"), py::arg("array"));

  m.def(
      "load_tensor",
      [](const std::string& path) {
        return array_from_tensor(load_tensor(path));
      },
      py::arg("path"));

  m.def(
      "synthesize",
      [](const std::string& config, const std::string& out_dir) {
        json j = json::parse(config);
        DatasetHandle handle = synthesize(data_config_from_json(j), out_dir);
        return handle.num_clips();
      },
      py::arg("config_json"), py::arg("out_dir"));

  m.def(
      "train",
      [](PyModel& model, const std::string& train_config,
         const std::string& data_dir, const std::string& out_dir) {
        TrainConfig tc = train_config_from_json(json::parse(train_config));
        DatasetHandle data = open_dataset(data_dir);
        TrainStats stats = train(tc, model.store, data, out_dir);
        json out{{"critic_updates", stats.critic_updates},
                 {"generator_updates", stats.generator_updates},
                 {"clip_iters", stats.clip_iters},
                 {"iters_completed", stats.iters_completed}};
        return out.dump();
      },
      py::arg("model"), py::arg("train_config_json"), py::arg("data_dir"),
      py::arg("out_dir"));

  m.def(
      "gam_score",
      [](const PyModel& a, const PyModel& b, const std::string& data_dir,
         int64_t samples, uint64_t seed) {
        DatasetHandle data = open_dataset(data_dir);
        Rng rng(seed);
        return gam_score(a.store, b.store, data, samples, rng)
            .to_json()
            .dump();
      },
      py::arg("model_a"), py::arg("model_b"), py::arg("data_dir"),
      py::arg("samples") = 128, py::arg("seed") = 0);

  py::class_<PyModel>(m, "Model")
      .def_static("build", &PyModel::build_from, py::arg("config"),
                  py::arg("seed") = 0,
                  "Build from a preset name or a model-config JSON string")
      .def_static("load", &PyModel::load, py::arg("checkpoint_dir"))
      .def("save", &PyModel::save, py::arg("checkpoint_dir"))
      .def("config_json", &PyModel::config_json)
      .def("generate", &PyModel::generate, py::arg("seed"),
           py::arg("label") = std::nullopt, py::arg("factor") = 1,
           "Returns frames [T, C, H, W] in [-1, 1]")
      .def("discriminate", &PyModel::discriminate_clip, py::arg("frames"),
           py::arg("label") = std::nullopt)
      .def("certify", &PyModel::certify,
           "Lipschitz certificate as a JSON string")
      .def("clipped", &PyModel::clipped,
           "Copy of the model with singular value clipping applied");
}
