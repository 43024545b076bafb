#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace panelnet {

struct DepthMetrics {
  double mre = 0, mae = 0, rmse = 0, rmse_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  std::int64_t valid = 0;
  // Valid pixels left out of rmse_log because pred <= 0 (they also fail every delta).
  std::int64_t log_excluded = 0;
};

// Over pixels with gt > 0. Throws MetricError when there are none.
DepthMetrics depth_metrics(std::span<const float> pred, std::span<const float> gt);

struct SegMetrics {
  double miou = 0, macc = 0;
  int classes_present = 0;
};

// Per-class IoU and accuracy from the confusion matrix, averaged over the
// classes that occur in gt. gt pixels labelled 255 are skipped.
SegMetrics seg_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                       int num_classes);

// Axis-aligned box in camera-centred coordinates (z up).
struct Cuboid {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0, z0 = 0, z1 = 0;
  double volume() const;
};

// Walls from the floor boundary: each column's horizon point is assigned to
// the wall its ray meets first in the current box, and each wall is placed at
// the median coordinate of its points. Floor at -h_c, ceiling at height - h_c.
Cuboid fit_cuboid(std::span<const double> boundary, double camera_height, double room_height);

// Intersection volume over union volume. Throws MetricError on a zero-volume box.
double cuboid_3diou(const Cuboid& a, const Cuboid& b);

// step,mre,mae,rmse,rmse_log,d1,d2,d3,miou,macc,iou3d
std::string metrics_csv_header();
std::string metrics_csv_row(std::int64_t step, const std::optional<DepthMetrics>& depth,
                            const std::optional<SegMetrics>& seg, const std::optional<double>& iou3d);

}  // namespace panelnet
