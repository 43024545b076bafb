#pragma once

#include <vector>

#include "panelnet/ad/tensor.hpp"

// Differentiable op set. Shapes are explicit: binary elementwise ops require
// identical shapes, and broadcasting only happens through bias_add/add_tiled.
// Shape mismatches throw ShapeError naming both shapes.
namespace panelnet::ad {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

// b has shape [x.shape[axis]] and is repeated along every other axis.
template <typename T> Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b, int axis);
// e matches the trailing dims of x and is repeated over the leading ones.
template <typename T> Tensor<T> add_tiled(const Tensor<T>& x, const Tensor<T>& e);

// Kinks use the left derivative: relu'(0) = 0, abs'(0) = -1, max picks b on ties.
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);  // exact erf form
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> softplus(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);

// [M, K] x [K, N]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// [B, M, K] x [B, K, N]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

// x: [N, C, H, W], w: [O, C, KH, KW], zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding);
template <typename T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);
// Normalizes over the last axis; gamma/beta have that axis' length.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);
// Per-channel (axis 1) normalization. Training mode uses batch statistics and
// updates the running buffers in place with `momentum`; eval mode uses them.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length);

// Reductions drop the reduced axis.
template <typename T> Tensor<T> sum(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> mean(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

}  // namespace panelnet::ad
