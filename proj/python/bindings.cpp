#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "panelnet/errors.hpp"
#include "panelnet/harness.hpp"
#include "panelnet/losses.hpp"
#include "panelnet/metrics.hpp"
#include "panelnet/panel_pipeline.hpp"
#include "panelnet/synthetic_rooms.hpp"

namespace py = pybind11;
using namespace panelnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ErpTensor to_raster(const FloatArray& a) {
  if (a.ndim() != 3) throw ShapeError("expected a C x H x W array");
  const auto* p = a.data();
  return ErpTensor(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                   std::vector<float>(p, p + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Raster<T>& r) {
  py::array_t<T> out({r.channels(), r.height(), r.width()});
  std::copy(r.data().begin(), r.data().end(), out.mutable_data());
  return out;
}

template <typename T>
std::span<const T> view(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

py::dict sample_dict(const RoomSample& s) {
  py::dict d;
  d["rgb"] = to_array(s.rgb);
  d["depth"] = to_array(s.depth);
  d["semantics"] = to_array(s.semantics);
  d["boundary"] = py::array_t<double>(static_cast<py::ssize_t>(s.boundary.size()), s.boundary.data());
  d["height"] = s.height;
  d["camera_height"] = s.camera_height;
  return d;
}

}  // namespace

PYBIND11_MODULE(_panelnet, m) {
  m.doc() = "Panel-based panorama depth, segmentation and layout";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<PanelConfig>(m, "PanelConfig")
      .def(py::init([](int interval, int stride, int width, int height) {
             PanelConfig c{interval, stride, width, height};
             c.validate();
             return c;
           }),
           py::arg("interval"), py::arg("stride"), py::arg("width"), py::arg("height"))
      .def_readonly("interval", &PanelConfig::interval)
      .def_readonly("stride", &PanelConfig::stride)
      .def_readonly("width", &PanelConfig::width)
      .def_readonly("height", &PanelConfig::height)
      .def_property_readonly("num_panels", &PanelConfig::num_panels)
      .def_property_readonly("coverage", &PanelConfig::coverage)
      .def("erp_column", &PanelConfig::erp_column, py::arg("panel"), py::arg("j"));

  m.def(
      "partition",
      [](const FloatArray& erp, const PanelConfig& cfg) {
        const auto set = partition_erp(to_raster(erp), cfg);
        py::list out;
        for (const auto& p : set.panels) out.append(to_array(p));
        return out;
      },
      py::arg("erp"), py::arg("config"), "Split a C x H x W panorama into N panels.");
  m.def(
      "merge",
      [](const std::vector<FloatArray>& panels, const PanelConfig& cfg, const std::optional<std::vector<FloatArray>>& conf) {
        PanelSet preds{{}, cfg}, weights{{}, cfg};
        for (const auto& p : panels) preds.panels.push_back(to_raster(p));
        if (conf) {
          for (const auto& c : *conf) weights.panels.push_back(to_raster(c));
        }
        return to_array(merge_panels(preds, conf ? &weights : nullptr, cfg));
      },
      py::arg("panels"), py::arg("config"), py::arg("confidences") = py::none());
  m.def("covering_panels", &covering_panels, py::arg("column"), py::arg("config"));

  m.def(
      "pixel_to_angles",
      [](double x, double y, int width, int height) {
        const auto a = pixel_to_angles(x, y, width, height);
        return py::make_tuple(a.phi, a.theta);
      },
      py::arg("x"), py::arg("y"), py::arg("width"), py::arg("height"), "Returns (phi, theta).");

  m.def("berhu", &berhu, py::arg("e"), py::arg("c"));
  m.def(
      "depth_metrics",
      [](const FloatArray& pred, const FloatArray& gt) {
        const auto r = depth_metrics(view(pred), view(gt));
        py::dict d;
        d["mre"] = r.mre;
        d["mae"] = r.mae;
        d["rmse"] = r.rmse;
        d["rmse_log"] = r.rmse_log;
        d["delta1"] = r.delta1;
        d["delta2"] = r.delta2;
        d["delta3"] = r.delta3;
        return d;
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "seg_metrics",
      [](const ByteArray& pred, const ByteArray& gt, int classes) {
        const auto r = seg_metrics(view(pred), view(gt), classes);
        return py::make_tuple(r.miou, r.macc);
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"), "Returns (mIoU, mAcc).");

  m.def(
      "render_room",
      [](std::uint64_t seed, int height, int width, int furniture) {
        RoomRanges ranges;
        ranges.furniture = furniture;
        ranges.validate();
        return sample_dict(render_erp(sample_room(seed, ranges), width, height));
      },
      py::arg("seed"), py::arg("height") = 128, py::arg("width") = 256, py::arg("furniture") = 0);
  m.def(
      "read_sample", [](const std::filesystem::path& dir) { return sample_dict(read_sample(dir)); },
      py::arg("directory"));

  m.def(
      "gradcheck",
      [](const std::string& module, int seeds) {
        std::vector<GradCheckOutcome> outcomes;
        {
          py::gil_scoped_release release;
          outcomes = run_gradchecks(module, seeds);
        }
        py::list out;
        for (const auto& o : outcomes) {
          out.append(py::make_tuple(o.name, o.passed, o.max_rel_error));
        }
        return out;
      },
      py::arg("module"), py::arg("seeds") = 1, "List of (name, passed, max relative error).");
  m.def("gradcheck_modules", &gradcheck_modules);
}
