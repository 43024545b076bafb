#include "panelnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "panelnet/errors.hpp"
#include "panelnet/erp_geometry.hpp"
#include "panelnet/losses.hpp"

namespace panelnet {

DepthMetrics depth_metrics(std::span<const float> pred, std::span<const float> gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("depth metrics: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(gt.size()) + " targets");
  }
  DepthMetrics m;
  double rel = 0, abs_sum = 0, sq = 0, log_sq = 0;
  std::int64_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i];
    if (!(g > 0.0)) continue;
    const double p = pred[i];
    const double diff = p - g;
    ++m.valid;
    rel += std::abs(diff) / g;
    abs_sum += std::abs(diff);
    sq += diff * diff;
    if (!(p > 0.0)) {
      ++m.log_excluded;
      continue;
    }
    const double l = std::log(p) - std::log(g);
    log_sq += l * l;
    const double ratio = std::max(p / g, g / p);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
  }
  if (m.valid == 0) throw MetricError("depth metrics: no valid pixels (gt > 0)");
  const double n = static_cast<double>(m.valid);
  m.mre = rel / n;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq / n);
  const std::int64_t logged = m.valid - m.log_excluded;
  m.rmse_log = logged > 0 ? std::sqrt(log_sq / static_cast<double>(logged)) : 0.0;
  m.delta1 = d1 / n;
  m.delta2 = d2 / n;
  m.delta3 = d3 / n;
  return m;
}

SegMetrics seg_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                       int num_classes) {
  if (pred.size() != gt.size()) {
    throw ShapeError("seg metrics: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(gt.size()) + " labels");
  }
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::int64_t> confusion(k * k, 0);  // [gt][pred]
  std::vector<std::int64_t> pred_other(k, 0);     // gt class predicted as an out-of-range id
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnoreLabel) continue;
    if (gt[i] >= k) {
      throw DataError("seg metrics: label " + std::to_string(gt[i]) + " outside [0, " +
                      std::to_string(k) + ")");
    }
    if (pred[i] < k) {
      ++confusion[gt[i] * k + pred[i]];
    } else {
      ++pred_other[gt[i]];
    }
  }
  SegMetrics m;
  for (std::size_t c = 0; c < k; ++c) {
    std::int64_t row = pred_other[c], col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += confusion[c * k + j];
      col += confusion[j * k + c];
    }
    if (row == 0) continue;
    const double tp = static_cast<double>(confusion[c * k + c]);
    m.miou += tp / static_cast<double>(row + col - confusion[c * k + c]);
    m.macc += tp / static_cast<double>(row);
    ++m.classes_present;
  }
  if (m.classes_present > 0) {
    m.miou /= m.classes_present;
    m.macc /= m.classes_present;
  }
  return m;
}

double Cuboid::volume() const {
  return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0) * std::max(0.0, z1 - z0);
}

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + mid));
}

// 0: -x, 1: +x, 2: -y, 3: +y.
int first_wall(double dx, double dy, const std::array<double, 4>& walls) {
  double best = INFINITY;
  int hit = 0;
  const std::array<std::pair<double, double>, 4> planes{
      {{dx, walls[0]}, {dx, walls[1]}, {dy, walls[2]}, {dy, walls[3]}}};
  for (int k = 0; k < 4; ++k) {
    const auto [dir, pos] = planes[k];
    if (dir == 0.0) continue;
    const double t = pos / dir;
    if (t > 0.0 && t < best) {
      best = t;
      hit = k;
    }
  }
  return hit;
}

}  // namespace

Cuboid fit_cuboid(std::span<const double> boundary, double camera_height, double room_height) {
  if (boundary.empty()) throw MetricError("fit_cuboid: empty boundary");
  if (!(room_height > camera_height)) {
    throw MetricError("fit_cuboid: room height " + std::to_string(room_height) +
                      " not above camera height " + std::to_string(camera_height));
  }
  const int w = static_cast<int>(boundary.size());
  std::vector<double> px(w), py(w), dx(w), dy(w);
  for (int j = 0; j < w; ++j) {
    const double phi = pixel_to_angles(j, 0, w, 1).phi;
    const double d = horizon_depth(boundary[j], camera_height);
    dx[j] = std::cos(phi);
    dy[j] = std::sin(phi);
    px[j] = d * dx[j];
    py[j] = d * dy[j];
  }
  std::vector<int> assign(w);
  for (int j = 0; j < w; ++j) {
    assign[j] = std::abs(dx[j]) >= std::abs(dy[j]) ? (dx[j] < 0 ? 0 : 1) : (dy[j] < 0 ? 2 : 3);
  }
  std::array<double, 4> walls{};
  for (int iter = 0; iter < 20; ++iter) {
    std::array<std::vector<double>, 4> groups;
    for (int j = 0; j < w; ++j) groups[assign[j]].push_back(assign[j] < 2 ? px[j] : py[j]);
    for (int k = 0; k < 4; ++k) {
      if (groups[k].empty()) throw MetricError("fit_cuboid: no boundary column supports wall " + std::to_string(k));
      walls[k] = median(groups[k]);
    }
    if (!(walls[0] < 0.0 && walls[1] > 0.0 && walls[2] < 0.0 && walls[3] > 0.0)) {
      throw MetricError("fit_cuboid: fitted walls do not enclose the camera");
    }
    bool changed = false;
    for (int j = 0; j < w; ++j) {
      const int a = first_wall(dx[j], dy[j], walls);
      changed = changed || a != assign[j];
      assign[j] = a;
    }
    if (!changed) break;
  }
  return {walls[0], walls[1], walls[2], walls[3], -camera_height, room_height - camera_height};
}

double cuboid_3diou(const Cuboid& a, const Cuboid& b) {
  const double va = a.volume(), vb = b.volume();
  if (!(va > 0.0) || !(vb > 0.0)) throw MetricError("3D IoU: degenerate (zero-volume) box");
  const Cuboid inter{std::max(a.x0, b.x0), std::min(a.x1, b.x1), std::max(a.y0, b.y0),
                     std::min(a.y1, b.y1), std::max(a.z0, b.z0), std::min(a.z1, b.z1)};
  const double vi = inter.volume();
  return vi / (va + vb - vi);
}

std::string metrics_csv_header() { return "step,mre,mae,rmse,rmse_log,d1,d2,d3,miou,macc,iou3d"; }

std::string metrics_csv_row(std::int64_t step, const std::optional<DepthMetrics>& depth,
                            const std::optional<SegMetrics>& seg, const std::optional<double>& iou3d) {
  std::string row = std::to_string(step);
  const auto put = [&row](std::optional<double> v) {
    row += ',';
    if (v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", *v);
      row += buf;
    }
  };
  const auto d = [&depth](double DepthMetrics::*f) {
    return depth ? std::optional<double>((*depth).*f) : std::nullopt;
  };
  put(d(&DepthMetrics::mre));
  put(d(&DepthMetrics::mae));
  put(d(&DepthMetrics::rmse));
  put(d(&DepthMetrics::rmse_log));
  put(d(&DepthMetrics::delta1));
  put(d(&DepthMetrics::delta2));
  put(d(&DepthMetrics::delta3));
  put(seg ? std::optional<double>(seg->miou) : std::nullopt);
  put(seg ? std::optional<double>(seg->macc) : std::nullopt);
  put(iou3d);
  return row;
}

}  // namespace panelnet
