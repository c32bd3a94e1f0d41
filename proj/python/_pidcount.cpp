#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>

#include "pidcount/baselines.hpp"
#include "pidcount/checkpoint.hpp"
#include "pidcount/cli.hpp"
#include "pidcount/data.hpp"
#include "pidcount/errors.hpp"
#include "pidcount/metrics.hpp"
#include "pidcount/model.hpp"
#include "pidcount/postproc.hpp"
#include "pidcount/trainer.hpp"

namespace py = pybind11;
using namespace pidcount;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("image must be HxW or HxWxC");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

FloatArray from_image(const Image& img) {
  std::vector<py::ssize_t> shape{img.height, img.width};
  if (img.channels > 1) shape.push_back(img.channels);
  FloatArray a(shape);
  std::copy(img.data.begin(), img.data.end(), a.mutable_data());
  return a;
}

Mask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw DimensionError("mask must be HxW");
  Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.data[i] = a.data()[i] != 0;
  return m;
}

ByteArray from_mask(const Mask& m) {
  ByteArray a({m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from_data(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::array_t<std::int32_t> from_labels(const LabelMap& l) {
  py::array_t<std::int32_t> a({l.height, l.width});
  std::copy(l.labels.begin(), l.labels.end(), a.mutable_data());
  return a;
}

PostprocParams postproc(float threshold, int min_area, bool opening) {
  PostprocParams p{threshold, min_area, opening};
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_pidcount, m) {
  m.doc() = "Dense tiny-object segmentation and counting";

  // translators run newest first, so the base class goes first
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Sample>(m, "Sample")
      .def(py::init([](std::string id, const FloatArray& image, const ByteArray& mask, int true_count) {
             return Sample{std::move(id), to_image(image), to_mask(mask), true_count};
           }),
           py::arg("id"), py::arg("image"), py::arg("mask"), py::arg("true_count") = -1)
      .def_readwrite("id", &Sample::id)
      .def_readwrite("true_count", &Sample::true_count)
      .def_property_readonly("image", [](const Sample& s) { return from_image(s.image); })
      .def_property_readonly("mask", [](const Sample& s) { return from_mask(s.mask); })
      .def("__repr__", [](const Sample& s) {
        return "<Sample " + s.id + " " + std::to_string(s.image.height) + "x" + std::to_string(s.image.width) + ">";
      });

  m.def(
      "synth_blobs",
      [](int n, int size, int min_count, int max_count, std::uint64_t seed, double noise_sigma) {
        SynthParams p;
        p.n_images = n;
        p.image_size = size;
        p.min_count = min_count;
        p.max_count = max_count;
        p.seed = seed;
        p.noise_sigma = noise_sigma;
        return synth_blobs(p);
      },
      py::arg("n") = 64, py::arg("size") = 32, py::arg("min_count") = 3, py::arg("max_count") = 12,
      py::arg("seed") = 1, py::arg("noise_sigma") = 0.05);
  m.def("load_dataset", [](const std::filesystem::path& dir) { return load_dataset(dir); });
  m.def("save_dataset", &save_dataset);
  m.def("augment8", &augment8);
  m.def("resize", &resize);

  m.def("label_components_8", [](const ByteArray& mask) {
    const auto l = label_components_8(to_mask(mask));
    return py::make_tuple(l.count, from_labels(l));
  });
  m.def(
      "count_mask",
      [](const ByteArray& mask, int min_area, bool opening) {
        const auto r = count_mask(to_mask(mask), postproc(0.5f, min_area, opening));
        return py::make_tuple(r.count, from_labels(r.labels));
      },
      py::arg("mask"), py::arg("min_area") = 9, py::arg("opening") = true);
  m.def(
      "count_objects",
      [](const FloatArray& probs, float threshold, int min_area, bool opening) {
        const auto t = to_tensor(probs);
        std::vector<int> counts;
        for (int i = 0; i < t.dim(0); ++i) counts.push_back(count_objects(t, postproc(threshold, min_area, opening), i).count);
        return counts;
      },
      py::arg("probs"), py::arg("threshold") = 0.5f, py::arg("min_area") = 9, py::arg("opening") = true,
      "Object count per batch item of an [N,2,H,W] probability map.");

  m.def("pid_downsample", [](const FloatArray& x) { return from_tensor(pid_downsample(to_tensor(x))); });
  m.def("pid_reassemble", [](const FloatArray& x) { return from_tensor(pid_reassemble(to_tensor(x))); });

  m.def("segmentation_metrics", [](const ByteArray& pred, const ByteArray& gt) {
    const auto s = segmentation_metrics(confusion(to_mask(pred), to_mask(gt)));
    py::dict d;
    d["accuracy"] = s.accuracy;
    d["dice"] = s.dice;
    d["jaccard"] = s.jaccard;
    d["precision"] = s.precision;
    return d;
  });
  m.def("counting_accuracy", &counting_accuracy, py::arg("n_pred"), py::arg("n_gt"));
  m.def("hausdorff", [](const ByteArray& a, const ByteArray& b) {
    const auto r = hausdorff(to_mask(a), to_mask(b));
    return py::make_tuple(r.distance, r.one_empty);
  });

  m.def("otsu_threshold", [](const FloatArray& image) { return otsu_threshold(to_image(image)); });
  m.def(
      "run_baseline",
      [](const std::string& method, const FloatArray& image, int min_area, bool dark_foreground) {
        BaselineParams p;
        p.post.min_area = min_area;
        p.dark_foreground = dark_foreground;
        const auto r = run_baseline(parse_baseline_method(method), to_image(image), p);
        return py::make_tuple(r.count, from_mask(r.mask));
      },
      py::arg("method"), py::arg("image"), py::arg("min_area") = 0, py::arg("dark_foreground") = false,
      "Returns (count, predicted mask) for otsu, watershed or hough.");

  py::class_<Model>(m, "Model")
      .def_static(
          "build",
          [](const std::string& variant, int width, std::uint64_t seed, int in_channels) {
            ModelConfig c;
            c.variant = parse_variant(variant);
            c.base_width = width;
            c.in_channels = in_channels;
            return Model::build(c, seed);
          },
          py::arg("variant") = "pid", py::arg("width") = 16, py::arg("seed") = 1, py::arg("in_channels") = 1)
      .def_static("load", [](const std::filesystem::path& p) { return Model::from_checkpoint(load_checkpoint(p)); })
      .def("save", [](const Model& self, const std::filesystem::path& p) { save_checkpoint(p, self.to_checkpoint()); })
      .def_property_readonly("variant", [](const Model& self) { return std::string(variant_name(self.config().variant)); })
      .def_property_readonly("width", [](const Model& self) { return self.config().base_width; })
      .def("parameter_count", &Model::parameter_count)
      .def("topology", &Model::topology, py::arg("height"), py::arg("width"))
      .def(
          "forward",
          [](const Model& self, const FloatArray& batch) {
            NoGradGuard guard;
            return from_tensor(self.forward(to_tensor(batch)));
          },
          "[N,C,H,W] images -> [N,2,H,W] probabilities (channel 1 = foreground).")
      .def(
          "train",
          [](Model& self, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, int epochs,
             int batch_size, float lr, std::uint64_t seed) {
            HyperParams h;
            h.epochs = epochs;
            h.batch_size = batch_size;
            h.lr = lr;
            h.seed = seed;
            auto r = [&] {
              py::gil_scoped_release release;
              return train(self, train_set, val_set, h);
            }();
            py::dict curves;
            curves["train_loss"] = r.curves.train_loss;
            curves["train_iou"] = r.curves.train_iou;
            curves["val_loss"] = r.curves.val_loss;
            curves["val_iou"] = r.curves.val_iou;
            curves["best_epoch"] = r.curves.best_epoch;
            return py::make_tuple(std::move(r.best), curves);
          },
          py::arg("train_set"), py::arg("val_set"), py::arg("epochs") = 100, py::arg("batch_size") = 8,
          py::arg("lr") = 0.001f, py::arg("seed") = 0,
          "Trains in place; returns (best-validation model copy, curves dict).");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "pidcount");
        return run_cli(args, std::cout, std::cerr);
      },
      py::arg("args"), "Runs a pidcount command line and returns its exit code.");
}
