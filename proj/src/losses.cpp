#include "panelnet/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "panelnet/ad/ops.hpp"
#include "panelnet/errors.hpp"

namespace panelnet {

namespace {

template <typename T>
void require_same_size(const char* what, const Tensor<T>& pred, std::size_t n) {
  if (pred.numel() != n) {
    throw ShapeError(std::string(what) + ": prediction " + ad::to_string(pred.shape()) + " has " +
                     std::to_string(pred.numel()) + " values, target has " + std::to_string(n));
  }
}

// Loss value and dL/dpred for BerHu with threshold c (no dependence of c on pred).
template <typename T>
double berhu_terms(const T* p, std::span<const float> gt, double c, std::vector<T>* grad,
                   std::int64_t* count) {
  double total = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0f)) continue;
    ++n;
    const double e = static_cast<double>(p[i]) - gt[i];
    total += berhu(e, c);
  }
  if (n == 0) throw LossError("berhu: no valid pixels (gt > 0)");
  if (grad) {
    grad->assign(gt.size(), T(0));
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!(gt[i] > 0.0f)) continue;
      const double e = static_cast<double>(p[i]) - gt[i];
      const double d = std::abs(e) <= c ? (e > 0 ? 1.0 : -1.0) : e / c;
      (*grad)[i] = static_cast<T>(d / n);
    }
  }
  *count = n;
  return total / n;
}

}  // namespace

double berhu(double e, double c) {
  const double a = std::abs(e);
  if (a <= c) return a;
  return (e * e + c * c) / (2.0 * c);
}

template <typename T>
Tensor<T> berhu_loss(const Tensor<T>& pred, std::span<const float> gt) {
  require_same_size("berhu", pred, gt.size());
  const T* p = pred.data().data();
  double max_abs = 0.0;
  std::int64_t arg = -1;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0f)) continue;
    const double a = std::abs(static_cast<double>(p[i]) - gt[i]);
    if (arg < 0 || a > max_abs) {
      max_abs = a;
      arg = static_cast<std::int64_t>(i);
    }
  }
  if (arg < 0) throw LossError("berhu: no valid pixels (gt > 0)");
  const double c = 0.2 * max_abs;
  if (c == 0.0) {
    // Perfect prediction: every residual is zero.
    return ad::make_op<T>("berhu", {}, {T(0)}, {pred}, [](ad::Node<T>&) {});
  }
  std::vector<T> grad;
  std::int64_t n = 0;
  const double value = berhu_terms(p, gt, c, &grad, &n);
  // dL/dc from the quadratic branch, routed through c = 0.2 |e_arg|.
  double dc = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0f)) continue;
    const double e = static_cast<double>(p[i]) - gt[i];
    if (std::abs(e) > c) dc += 0.5 - e * e / (2.0 * c * c);
  }
  const double e_arg = static_cast<double>(p[arg]) - gt[arg];
  grad[arg] += static_cast<T>(dc / n * 0.2 * (e_arg > 0 ? 1.0 : -1.0));
  return ad::make_op<T>("berhu", {}, {static_cast<T>(value)}, {pred},
                        [grad = std::move(grad)](ad::Node<T>& self) {
                          T* g = ad::grad_target(self.inputs[0]);
                          if (!g) return;
                          const T up = self.grad[0];
                          for (std::size_t i = 0; i < grad.size(); ++i) g[i] += up * grad[i];
                        });
}

template <typename T>
Tensor<T> berhu_loss_fixed(const Tensor<T>& pred, std::span<const float> gt, double c) {
  require_same_size("berhu", pred, gt.size());
  if (!(c > 0.0)) throw LossError("berhu: threshold must be positive, got " + std::to_string(c));
  std::vector<T> grad;
  std::int64_t n = 0;
  const double value = berhu_terms(pred.data().data(), gt, c, &grad, &n);
  return ad::make_op<T>("berhu", {}, {static_cast<T>(value)}, {pred},
                        [grad = std::move(grad)](ad::Node<T>& self) {
                          T* g = ad::grad_target(self.inputs[0]);
                          if (!g) return;
                          const T up = self.grad[0];
                          for (std::size_t i = 0; i < grad.size(); ++i) g[i] += up * grad[i];
                        });
}

template <typename T>
Tensor<T> weighted_cross_entropy(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                 std::span<const double> class_weights) {
  if (logits.ndim() != 4) {
    throw ShapeError("cross_entropy: logits must be [B, K, H, W], got " + ad::to_string(logits.shape()));
  }
  const std::int64_t b = logits.dim(0), k = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  if (static_cast<std::int64_t>(labels.size()) != b * plane) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     ad::to_string(logits.shape()));
  }
  if (static_cast<std::int64_t>(class_weights.size()) != k) {
    throw ShapeError("cross_entropy: " + std::to_string(class_weights.size()) + " class weights for " +
                     std::to_string(k) + " classes");
  }
  const T* x = logits.data().data();
  std::vector<T> grad(logits.numel(), T(0));
  double total = 0.0, weight_sum = 0.0;
  std::vector<double> prob(k);
  for (std::int64_t s = 0; s < b; ++s) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const std::uint8_t y = labels[s * plane + i];
      if (y == kIgnoreLabel) continue;
      if (y >= k) {
        throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(k) + ")");
      }
      const double w = class_weights[y];
      if (w == 0.0) continue;
      double mx = -INFINITY;
      for (std::int64_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(x[(s * k + c) * plane + i]));
      double z = 0.0;
      for (std::int64_t c = 0; c < k; ++c) {
        prob[c] = std::exp(static_cast<double>(x[(s * k + c) * plane + i]) - mx);
        z += prob[c];
      }
      total += w * (std::log(z) + mx - static_cast<double>(x[(s * k + y) * plane + i]));
      weight_sum += w;
      for (std::int64_t c = 0; c < k; ++c) {
        grad[(s * k + c) * plane + i] = static_cast<T>(w * (prob[c] / z - (c == y ? 1.0 : 0.0)));
      }
    }
  }
  if (!(weight_sum > 0.0)) throw LossError("cross_entropy: no labelled pixel with positive weight");
  for (auto& g : grad) g = static_cast<T>(g / weight_sum);
  return ad::make_op<T>("cross_entropy", {}, {static_cast<T>(total / weight_sum)}, {logits},
                        [grad = std::move(grad)](ad::Node<T>& self) {
                          T* g = ad::grad_target(self.inputs[0]);
                          if (!g) return;
                          const T up = self.grad[0];
                          for (std::size_t i = 0; i < grad.size(); ++i) g[i] += up * grad[i];
                        });
}

double horizon_depth(double theta, double camera_height) {
  if (!(camera_height > 0.0)) {
    throw GeometryError("horizon depth: camera height must be positive, got " +
                        std::to_string(camera_height));
  }
  if (!(theta > std::numbers::pi / 2) || theta > std::numbers::pi) {
    throw GeometryError("horizon depth: floor boundary angle " + std::to_string(theta) +
                        " outside (pi/2, pi]");
  }
  return camera_height / std::tan(theta - std::numbers::pi / 2);
}

std::vector<double> boundary_to_horizon_depth(std::span<const double> boundary, double camera_height) {
  std::vector<double> out(boundary.size());
  for (std::size_t i = 0; i < boundary.size(); ++i) out[i] = horizon_depth(boundary[i], camera_height);
  return out;
}

template <typename T>
Tensor<T> boundary_to_horizon_depth(const Tensor<T>& boundary, std::span<const double> camera_heights) {
  if (boundary.ndim() != 2 || boundary.dim(0) != static_cast<std::int64_t>(camera_heights.size())) {
    throw ShapeError("horizon depth: boundary " + ad::to_string(boundary.shape()) + " vs " +
                     std::to_string(camera_heights.size()) + " camera heights");
  }
  const std::int64_t b = boundary.dim(0), w = boundary.dim(1);
  std::vector<T> out(boundary.numel());
  std::vector<T> slope(boundary.numel());
  const T* th = boundary.data().data();
  for (std::int64_t s = 0; s < b; ++s) {
    for (std::int64_t j = 0; j < w; ++j) {
      const double t = th[s * w + j];
      const double d = horizon_depth(t, camera_heights[s]);
      const double sn = std::sin(t - std::numbers::pi / 2);
      out[s * w + j] = static_cast<T>(d);
      // d/dtheta of h / tan(theta - pi/2)
      slope[s * w + j] = static_cast<T>(-camera_heights[s] / (sn * sn));
    }
  }
  return ad::make_op<T>("horizon_depth", boundary.shape(), std::move(out), {boundary},
                        [slope = std::move(slope)](ad::Node<T>& self) {
                          T* g = ad::grad_target(self.inputs[0]);
                          if (!g) return;
                          for (std::size_t i = 0; i < slope.size(); ++i) g[i] += self.grad[i] * slope[i];
                        });
}

template <typename T>
Tensor<T> layout_loss(const Tensor<T>& pred_boundary, const Tensor<T>& pred_height,
                      std::span<const double> gt_boundary, std::span<const double> gt_height,
                      std::span<const double> camera_heights) {
  const std::int64_t b = pred_boundary.ndim() == 2 ? pred_boundary.dim(0) : -1;
  if (b < 0 || static_cast<std::int64_t>(gt_boundary.size()) != b * pred_boundary.dim(1) ||
      pred_height.shape() != ad::Shape{b} || static_cast<std::int64_t>(gt_height.size()) != b) {
    throw ShapeError("layout loss: boundary " + ad::to_string(pred_boundary.shape()) + " / height " +
                     ad::to_string(pred_height.shape()) + " vs " + std::to_string(gt_boundary.size()) +
                     " boundary and " + std::to_string(gt_height.size()) + " height targets");
  }
  const std::int64_t w = pred_boundary.dim(1);
  std::vector<double> gt_depth(gt_boundary.size());
  for (std::int64_t s = 0; s < b; ++s) {
    for (std::int64_t j = 0; j < w; ++j) {
      gt_depth[s * w + j] = horizon_depth(gt_boundary[s * w + j], camera_heights[s]);
    }
  }
  const auto to_tensor = [](ad::Shape shape, std::span<const double> v) {
    return Tensor<T>::from_vector(std::move(shape), std::vector<T>(v.begin(), v.end()));
  };
  const auto depth = boundary_to_horizon_depth(pred_boundary, camera_heights);
  const auto depth_term = ad::mean_all(ad::abs(ad::sub(depth, to_tensor({b, w}, gt_depth))));
  const auto height_term = ad::mean_all(ad::abs(ad::sub(pred_height, to_tensor({b}, gt_height))));
  return ad::add(depth_term, height_term);
}

#define PANELNET_INSTANTIATE_LOSSES(T)                                                            \
  template Tensor<T> berhu_loss(const Tensor<T>&, std::span<const float>);                        \
  template Tensor<T> berhu_loss_fixed(const Tensor<T>&, std::span<const float>, double);          \
  template Tensor<T> weighted_cross_entropy(const Tensor<T>&, std::span<const std::uint8_t>,      \
                                            std::span<const double>);                             \
  template Tensor<T> boundary_to_horizon_depth(const Tensor<T>&, std::span<const double>);        \
  template Tensor<T> layout_loss(const Tensor<T>&, const Tensor<T>&, std::span<const double>,     \
                                 std::span<const double>, std::span<const double>);

PANELNET_INSTANTIATE_LOSSES(float)
PANELNET_INSTANTIATE_LOSSES(double)

}  // namespace panelnet
