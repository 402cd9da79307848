// Python bindings for the main operations: feature maps, kernel algebra,
// spherical K-means, network forward/backward, metrics, and trained models.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sckn/checkpoint.hpp"
#include "sckn/gradcheck.hpp"
#include "sckn/image_io.hpp"
#include "sckn/parallel.hpp"

namespace py = pybind11;
using namespace sckn;

namespace {

SpatialMap map_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a (channels, height, width) array");
  const int c = static_cast<int>(a.shape(0));
  const int h = static_cast<int>(a.shape(1));
  const int w = static_cast<int>(a.shape(2));
  SpatialMap m(c, h, w);
  auto r = a.unchecked<3>();
  for (int ch = 0; ch < c; ++ch)
    for (int rr = 0; rr < h; ++rr)
      for (int cc = 0; cc < w; ++cc) m.at(ch, rr, cc) = r(ch, rr, cc);
  return m;
}

py::array_t<double> array_from_map(const SpatialMap& m) {
  py::array_t<double> a({m.channels, m.height, m.width});
  auto r = a.mutable_unchecked<3>();
  for (int ch = 0; ch < m.channels; ++ch)
    for (int rr = 0; rr < m.height; ++rr)
      for (int cc = 0; cc < m.width; ++cc) r(ch, rr, cc) = m.at(ch, rr, cc);
  return a;
}

std::vector<SpatialMap> maps_from_list(const py::list& images) {
  std::vector<SpatialMap> out;
  for (const auto& item : images)
    out.push_back(map_from_array(py::cast<py::array_t<double>>(item)));
  return out;
}

LayerConfig config_from_dict(const py::dict& d) {
  LayerConfig c;
  if (d.contains("filters")) c.filters = py::cast<int>(d["filters"]);
  if (d.contains("patch_size")) c.patch_size = py::cast<int>(d["patch_size"]);
  if (d.contains("subsampling")) c.subsampling = py::cast<double>(d["subsampling"]);
  if (d.contains("alpha")) c.alpha = py::cast<double>(d["alpha"]);
  if (d.contains("epsilon")) c.epsilon = py::cast<double>(d["epsilon"]);
  return c;
}

}  // namespace

PYBIND11_MODULE(sckn, m) {
  m.doc() = "supervised convolutional kernel networks";

  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", PyExc_ArithmeticError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("set_max_threads", &set_max_threads, py::arg("n"));

  // kernel algebra
  m.def("kappa",
        [](double alpha, const Matrix& t) { return kappa(KernelSpec(alpha), t); },
        py::arg("alpha"), py::arg("t"));
  m.def("kappa_prime",
        [](double alpha, const Matrix& t) { return kappa_prime(KernelSpec(alpha), t); },
        py::arg("alpha"), py::arg("t"));
  m.def("inv_sqrt_psd",
        [](const Matrix& M, double eps) {
          WhiteningSet w = inv_sqrt_psd(M, eps);
          return py::make_tuple(w.A, w.A_half, w.A_threehalf);
        },
        py::arg("M"), py::arg("epsilon") = 0.0,
        "Returns (M+eps I)^{-1/2}, ^{-1/4}, ^{-3/4}.");

  // feature-map operators
  m.def("extract_patches",
        [](const py::array_t<double>& image, int patch_size) {
          return Matrix(extract_patches(map_from_array(image), patch_size).data);
        },
        py::arg("image"), py::arg("patch_size"));
  m.def("pool_forward",
        [](const py::array_t<double>& image, double subsampling) {
          SpatialMap in = map_from_array(image);
          PoolOperator op(PoolSpec::from_subsampling(subsampling), in.height, in.width);
          return array_from_map(pool_forward(in, op));
        },
        py::arg("image"), py::arg("subsampling"));

  m.def("spherical_kmeans",
        [](const Matrix& unit_columns, int centroids, int iters, uint64_t seed) {
          return spherical_kmeans(unit_columns, centroids, iters, seed);
        },
        py::arg("unit_columns"), py::arg("centroids"), py::arg("iters") = 50,
        py::arg("seed") = 0);

  // networks
  py::class_<NetworkParams>(m, "Network")
      .def_static(
          "unsupervised",
          [](const py::list& layer_dicts, int input_channels, const py::list& images,
             int patches_per_layer, uint64_t seed, int kmeans_iters) {
            std::vector<LayerConfig> cfgs;
            for (const auto& d : layer_dicts) cfgs.push_back(config_from_dict(py::cast<py::dict>(d)));
            return unsupervised_init(cfgs, input_channels, maps_from_list(images),
                                     patches_per_layer, seed, kmeans_iters);
          },
          py::arg("layers"), py::arg("input_channels"), py::arg("images"),
          py::arg("patches_per_layer") = 10000, py::arg("seed") = 0,
          py::arg("kmeans_iters") = 50)
      .def_property_readonly("num_layers",
                             [](const NetworkParams& n) { return n.layers.size(); })
      .def("filters", [](const NetworkParams& n, size_t j) { return n.layers.at(j).filters; },
           py::arg("layer"))
      .def("forward",
           [](const NetworkParams& n, const py::array_t<double>& image) {
             return array_from_map(network_forward(n, map_from_array(image)));
           },
           py::arg("image"))
      .def("kernel",
           [](const NetworkParams& n, const py::array_t<double>& a,
              const py::array_t<double>& b) {
             return network_kernel(n, map_from_array(a), map_from_array(b));
           },
           py::arg("image_a"), py::arg("image_b"));

  m.def("encode_patch",
        [](const NetworkParams& net, size_t layer, const Vector& x) {
          return encode_patch(net.layers.at(layer), x);
        },
        py::arg("network"), py::arg("layer"), py::arg("x"));

  // trained models
  py::class_<ClassifierHead>(m, "Classifier")
      .def_static("load",
                  [](const std::string& path) {
                    return classifier_from_checkpoint(load_checkpoint(path));
                  },
                  py::arg("path"))
      .def_property_readonly("classes", [](const ClassifierHead& h) { return h.classes; })
      .def("predict",
           [](const ClassifierHead& h, const py::array_t<double>& image) {
             return predict(h, map_from_array(image));
           },
           py::arg("image"))
      .def("error_pct",
           [](const ClassifierHead& h, const py::list& images, const std::vector<int>& labels) {
             return evaluate_error(h, maps_from_list(images), labels);
           },
           py::arg("images"), py::arg("labels"));

  py::class_<SrModel>(m, "SrModel")
      .def_static("load",
                  [](const std::string& path) {
                    return sr_from_checkpoint(load_checkpoint(path));
                  },
                  py::arg("path"))
      .def("upscale",
           [](const SrModel& model, const py::array_t<double>& rgb, int factor) {
             return array_from_map(sr_upscale(model, map_from_array(rgb), factor));
           },
           py::arg("image"), py::arg("factor") = 2);

  // metrics and image utilities
  m.def("psnr",
        [](const py::array_t<double>& ref, const py::array_t<double>& est, double peak) {
          return psnr(map_from_array(ref), map_from_array(est), peak);
        },
        py::arg("ref"), py::arg("est"), py::arg("peak") = 255.0);
  m.def("ssim",
        [](const py::array_t<double>& ref, const py::array_t<double>& est) {
          return ssim(map_from_array(ref), map_from_array(est));
        },
        py::arg("ref"), py::arg("est"));
  m.def("bicubic_resize",
        [](const py::array_t<double>& image, double scale, bool antialias) {
          return array_from_map(bicubic_resize(map_from_array(image), scale, antialias));
        },
        py::arg("image"), py::arg("scale"), py::arg("antialias") = true);
  m.def("rgb_to_ycbcr",
        [](const py::array_t<double>& image) {
          return array_from_map(rgb_to_ycbcr(map_from_array(image)));
        });
  m.def("ycbcr_to_rgb",
        [](const py::array_t<double>& image) {
          return array_from_map(ycbcr_to_rgb(map_from_array(image)));
        });
  m.def("read_image",
        [](const std::string& path) { return array_from_map(read_image(path)); },
        py::arg("path"));
  m.def("write_image",
        [](const std::string& path, const py::array_t<double>& image) {
          write_image(path, map_from_array(image));
        },
        py::arg("path"), py::arg("image"));

  m.def("gradcheck",
        [](uint64_t seed, double step) {
          GradcheckReport r = run_gradcheck(seed, step);
          py::dict d;
          d["max_rel_z"] = r.max_rel_z;
          d["max_rel_alpha"] = r.max_rel_alpha;
          d["step"] = r.step;
          d["passed"] = r.passed();
          return d;
        },
        py::arg("seed") = 0, py::arg("step") = 1e-4,
        "Central-difference audit of the analytic gradients on a toy network.");
}
