#include "panelnet/erp_geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "panelnet/errors.hpp"

namespace panelnet {

using std::numbers::pi;

void PanelConfig::validate() const {
  if (interval <= 0 || stride <= 0 || width <= 0 || height <= 0) {
    throw ConfigError("panel config: interval, stride, width and height must be positive");
  }
  if (width % stride != 0) {
    throw ConfigError("panel config: stride " + std::to_string(stride) +
                      " does not divide ERP width " + std::to_string(width));
  }
  if (interval % stride != 0) {
    throw ConfigError("panel config: stride " + std::to_string(stride) +
                      " does not divide interval " + std::to_string(interval));
  }
  if (interval > width) {
    throw ConfigError("panel config: interval " + std::to_string(interval) +
                      " exceeds ERP width " + std::to_string(width));
  }
}

SphericalAngles SphericalAngles::normalized() const {
  double p = std::remainder(phi, 2.0 * pi);  // [-pi, pi]
  if (p <= -pi) p += 2.0 * pi;
  return {p, theta};
}

namespace {

// (2k + 1) / (2n) is evaluated on exact integers so that equal rationals
// give bitwise-equal angles across resolutions.
SphericalAngles angles_from_doubled(double twice_x_plus_one, double twice_y_plus_one, int width,
                                    int height) {
  SphericalAngles a;
  a.theta = pi * (twice_y_plus_one / (2.0 * height));
  a.phi = 2.0 * pi * (twice_x_plus_one / (2.0 * width)) - pi;
  return a;
}

}  // namespace

SphericalAngles pixel_to_angles(double x, double y, int width, int height) {
  if (width <= 0 || height <= 0) throw DomainError("pixel_to_angles: non-positive raster size");
  if (!(x >= 0.0 && x < width) || !(y >= 0.0 && y < height)) {
    throw DomainError("pixel_to_angles: (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") outside " + std::to_string(width) + "x" + std::to_string(height));
  }
  return angles_from_doubled(2.0 * x + 1.0, 2.0 * y + 1.0, width, height);
}

std::array<double, 3> angles_to_unit_vector(const SphericalAngles& a) {
  const double st = std::sin(a.theta);
  return {st * std::cos(a.phi), st * std::sin(a.phi), std::cos(a.theta)};
}

PanelGeometrySlice panel_coordinate_grid(int panel, const PanelConfig& cfg, int ref_panel,
                                         int factor) {
  cfg.validate();
  const int n = cfg.num_panels();
  if (panel < 0 || panel >= n) {
    throw ConfigError("panel index " + std::to_string(panel) + " outside [0, " +
                      std::to_string(n) + ")");
  }
  if (ref_panel < 0 || ref_panel >= n) {
    throw ConfigError("reference panel " + std::to_string(ref_panel) + " outside [0, " +
                      std::to_string(n) + ")");
  }
  if (factor <= 0 || cfg.interval % factor != 0 || cfg.height % factor != 0 ||
      cfg.stride % factor != 0) {
    throw ConfigError("grid subsampling factor " + std::to_string(factor) +
                      " must divide interval, stride and height");
  }
  const int gh = cfg.height / factor;
  const int gw = cfg.interval / factor;

  auto fill_global = [&](int p, ErpTensor& out) {
    for (int r = 0; r < gh; ++r) {
      for (int c = 0; c < gw; ++c) {
        // Sample centre of the factor x factor block: doubled coordinate 2 col + factor.
        const long col = cfg.erp_column(p, c * factor);
        const double tx = 2.0 * col + factor;
        const double ty = 2.0 * (r * factor) + factor;
        const auto v = angles_to_unit_vector(angles_from_doubled(tx, ty, cfg.width, cfg.height));
        for (int k = 0; k < 3; ++k) out.at(k, r, c) = static_cast<float>(v[k]);
      }
    }
  };

  PanelGeometrySlice s{ErpTensor(3, gh, gw), ErpTensor(2, gh, gw)};
  fill_global(panel, s.global);
  ErpTensor ref(3, gh, gw);
  fill_global(ref_panel, ref);
  for (int k = 0; k < 2; ++k) {
    for (int r = 0; r < gh; ++r) {
      for (int c = 0; c < gw; ++c) s.local.at(k, r, c) = ref.at(k, r, c);
    }
  }
  return s;
}

PanelGeometry build_panel_geometry(const PanelConfig& cfg, int ref_panel, int factor) {
  cfg.validate();
  PanelGeometry g;
  g.factor = factor;
  for (int p = 0; p < cfg.num_panels(); ++p) {
    auto slice = panel_coordinate_grid(p, cfg, ref_panel, factor);
    if (p == 0) g.local = std::move(slice.local);
    g.global.push_back(std::move(slice.global));
  }
  return g;
}

std::vector<float> PanelGeometry::embedding_input() const {
  std::vector<float> out;
  if (global.empty()) return out;
  const std::size_t plane = static_cast<std::size_t>(local.height()) * local.width();
  out.reserve(global.size() * 5 * plane);
  for (const auto& g : global) {
    out.insert(out.end(), g.data().begin(), g.data().end());
    out.insert(out.end(), local.data().begin(), local.data().end());
  }
  return out;
}

}  // namespace panelnet
