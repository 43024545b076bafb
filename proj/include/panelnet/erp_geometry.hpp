#pragma once

#include <array>
#include <vector>

#include "panelnet/erp_tensor.hpp"
#include "panelnet/panel_config.hpp"

namespace panelnet {

// phi: azimuth in (-pi, pi]; theta: polar angle in (0, pi), zero at the zenith.
struct SphericalAngles {
  double phi = 0.0;
  double theta = 0.0;

  // Wraps phi into (-pi, pi]; theta is left untouched.
  SphericalAngles normalized() const;
};

// Pixel centres sit at +0.5, so no pixel lands on a pole:
//   theta = pi (y + 0.5) / H,  phi = 2 pi (x + 0.5) / W - pi.
// Fractional coordinates are accepted; anything outside [0, W) x [0, H) throws DomainError.
SphericalAngles pixel_to_angles(double x, double y, int width, int height);

std::array<double, 3> angles_to_unit_vector(const SphericalAngles& a);

// Coordinates for one panel sampled on a grid subsampled by `factor`
// (factor 4 gives the stem-output pixel centres).
struct PanelGeometrySlice {
  ErpTensor global;  // 3 x Hg x Ig: (x_s, y_s, z_s)
  ErpTensor local;   // 2 x Hg x Ig: (x'_s, y'_s); z'_s == z_s is not stored
};

PanelGeometrySlice panel_coordinate_grid(int panel, const PanelConfig& cfg, int ref_panel = 0,
                                         int factor = 1);

// All panels at once. local is shared by every panel.
struct PanelGeometry {
  std::vector<ErpTensor> global;
  ErpTensor local;
  int factor = 1;

  // N x 5 x Hg x Ig, channel order (x_s, y_s, z_s, x'_s, y'_s).
  std::vector<float> embedding_input() const;
};

PanelGeometry build_panel_geometry(const PanelConfig& cfg, int ref_panel = 0, int factor = 1);

}  // namespace panelnet
