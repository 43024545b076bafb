#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "panelnet/ad/tensor.hpp"

namespace panelnet {

using ad::Tensor;

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Reverse Huber: |e| up to c, (e^2 + c^2) / (2c) beyond.
double berhu(double e, double c);

// Mean BerHu over pixels with gt > 0, with c = 0.2 * max |pred - gt| over
// those pixels. The gradient includes c's dependence on the largest residual.
// Throws LossError when no pixel is valid.
template <typename T>
Tensor<T> berhu_loss(const Tensor<T>& pred, std::span<const float> gt);

// Same loss with an explicit threshold held constant.
template <typename T>
Tensor<T> berhu_loss_fixed(const Tensor<T>& pred, std::span<const float> gt, double c);

// logits [B, K, H, W]; labels B*H*W in [0, K) or kIgnoreLabel.
// sum_i w[y_i] * -log softmax(logits_i)[y_i] / sum_i w[y_i].
// Throws DataError for labels outside the class range, LossError when every
// pixel is ignored.
template <typename T>
Tensor<T> weighted_cross_entropy(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                 std::span<const double> class_weights);

// Horizontal wall distance h_c / tan(theta - pi/2) for floor-boundary angles.
// Throws GeometryError for theta <= pi/2 or theta > pi, or h_c <= 0.
double horizon_depth(double theta, double camera_height);
std::vector<double> boundary_to_horizon_depth(std::span<const double> boundary, double camera_height);

// Differentiable form over boundaries [B, W] with one camera height per scene.
template <typename T>
Tensor<T> boundary_to_horizon_depth(const Tensor<T>& boundary, std::span<const double> camera_heights);

// mean |d(pred) - d(gt)| over all columns + mean |h_pred - h_gt| over scenes.
// pred_boundary [B, W], pred_height [B]; gt arrays are scene-major.
template <typename T>
Tensor<T> layout_loss(const Tensor<T>& pred_boundary, const Tensor<T>& pred_height,
                      std::span<const double> gt_boundary, std::span<const double> gt_height,
                      std::span<const double> camera_heights);

}  // namespace panelnet
