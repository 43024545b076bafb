#include "panelnet/ad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "panelnet/errors.hpp"
#include "panelnet/parallel.hpp"

namespace panelnet::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

int normalize_axis(int axis, int ndim, const char* op) {
  const int a = axis < 0 ? axis + ndim : axis;
  if (a < 0 || a >= ndim) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(ndim));
  }
  return a;
}

struct AxisSplit {
  std::int64_t outer = 1, dim = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.dim = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, int rank) {
  if (a.ndim() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(a.shape()));
  }
}

template <typename T, typename F, typename D>
Tensor<T> unary(const char* name, const Tensor<T>& x, F f, D df) {
  const auto in = x.data();
  std::vector<T> y(in.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(in[i]);
  return make_op<T>(name, x.shape(), std::move(y), {x}, [df](Node<T>& self) {
    T* g = grad_target(self.inputs[0]);
    if (!g) return;
    const auto& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[i] += self.grad[i] * df(xv[i], self.value[i]);
    }
  });
}

template <typename T>
void accumulate(T* dst, const T* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("add", a, b);
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_op<T>("add", a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      if (T* g = grad_target(self.inputs[k])) accumulate(g, self.grad.data(), self.grad.size());
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("sub", a, b);
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  return make_op<T>("sub", a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    if (T* g = grad_target(self.inputs[0])) accumulate(g, self.grad.data(), self.grad.size());
    if (T* g = grad_target(self.inputs[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("mul", a, b);
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_op<T>("mul", a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (T* g = grad_target(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = grad_target(self.inputs[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("maximum", a, b);
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(a.data()[i], b.data()[i]);
  return make_op<T>("maximum", a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    T* ga = grad_target(self.inputs[0]);
    T* gb = grad_target(self.inputs[1]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] > bv[i]) {
        if (ga) ga[i] += self.grad[i];
      } else if (gb) {
        gb[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary<T>("scale", a, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary<T>("add_scalar", a, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b, int axis) {
  const int ax = normalize_axis(axis, x.ndim(), "bias_add");
  const auto sp = split_at(x.shape(), ax);
  if (b.ndim() != 1 || b.dim(0) != sp.dim) {
    throw ShapeError("bias_add: bias " + to_string(b.shape()) + " does not match axis " +
                     std::to_string(ax) + " of " + to_string(x.shape()));
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  const auto bv = b.data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t d = 0; d < sp.dim; ++d) {
      T* row = y.data() + (o * sp.dim + d) * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) row[i] += bv[d];
    }
  }
  return make_op<T>("bias_add", x.shape(), std::move(y), {x, b}, [sp](Node<T>& self) {
    if (T* g = grad_target(self.inputs[0])) accumulate(g, self.grad.data(), self.grad.size());
    if (T* gb = grad_target(self.inputs[1])) {
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t d = 0; d < sp.dim; ++d) {
          const T* row = self.grad.data() + (o * sp.dim + d) * sp.inner;
          T acc = 0;
          for (std::int64_t i = 0; i < sp.inner; ++i) acc += row[i];
          gb[d] += acc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> add_tiled(const Tensor<T>& x, const Tensor<T>& e) {
  const int lead = x.ndim() - e.ndim();
  bool ok = lead >= 0;
  for (int i = 0; ok && i < e.ndim(); ++i) ok = x.shape()[lead + i] == e.shape()[i];
  if (!ok) {
    throw ShapeError("add_tiled: " + to_string(e.shape()) + " is not a trailing block of " +
                     to_string(x.shape()));
  }
  const std::size_t m = e.numel();
  std::vector<T> y(x.data().begin(), x.data().end());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += e.data()[k % m];
  return make_op<T>("add_tiled", x.shape(), std::move(y), {x, e}, [m](Node<T>& self) {
    if (T* g = grad_target(self.inputs[0])) accumulate(g, self.grad.data(), self.grad.size());
    if (T* ge = grad_target(self.inputs[1])) {
      for (std::size_t k = 0; k < self.grad.size(); ++k) ge[k % m] += self.grad[k];
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return unary<T>(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary<T>(
      "softplus", x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>(
      "abs", x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : T(-1); });
}

// ---------------------------------------------------------------------------
// Matrix products

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: shape mismatch " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<T> y(m * n);
  MapM<T>(y.data(), m, n).noalias() = MapC<T>(a.data().data(), m, k) * MapC<T>(b.data().data(), k, n);
  return make_op<T>("matmul", {m, n}, std::move(y), {a, b}, [m, k, n](Node<T>& self) {
    MapC<T> dy(self.grad.data(), m, n);
    if (T* g = grad_target(self.inputs[0])) {
      MapM<T>(g, m, k).noalias() += dy * MapC<T>(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (T* g = grad_target(self.inputs[1])) {
      MapM<T>(g, k, n).noalias() += MapC<T>(self.inputs[0]->value.data(), m, k).transpose() * dy;
    }
  });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const auto bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != bs || b.dim(1) != k) {
    throw ShapeError("bmm: shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<T> y(bs * m * n);
  parallel_for(bs, [&](std::int64_t i) {
    MapM<T>(y.data() + i * m * n, m, n).noalias() =
        MapC<T>(a.data().data() + i * m * k, m, k) * MapC<T>(b.data().data() + i * k * n, k, n);
  });
  return make_op<T>("bmm", {bs, m, n}, std::move(y), {a, b}, [bs, m, k, n](Node<T>& self) {
    T* ga = grad_target(self.inputs[0]);
    T* gb = grad_target(self.inputs[1]);
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    parallel_for(bs, [&](std::int64_t i) {
      MapC<T> dy(self.grad.data() + i * m * n, m, n);
      if (ga) MapM<T>(ga + i * m * k, m, k).noalias() += dy * MapC<T>(bv + i * k * n, k, n).transpose();
      if (gb) MapM<T>(gb + i * k * n, k, n).noalias() += MapC<T>(av + i * m * k, m, k).transpose() * dy;
    });
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeom {
  std::int64_t n, c, h, w, o, kh, kw, ho, wo;
  int stride, pad;
  std::int64_t rows() const { return c * kh * kw; }
  std::int64_t cols() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) whose stride-1 tap kj lands inside the input row.
std::pair<std::int64_t, std::int64_t> valid_columns(const ConvGeom& g, std::int64_t kj) {
  const std::int64_t lo = std::clamp<std::int64_t>(g.pad - kj, 0, g.wo);
  const std::int64_t hi = std::clamp<std::int64_t>(g.w + g.pad - kj, lo, g.wo);
  return {lo, hi};
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* dst = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          T* row = dst + oh * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill(row, row + g.wo, T(0));
            continue;
          }
          const T* src = x + (c * g.h + ih) * g.w;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_columns(g, kj);
            std::fill(row, row + lo, T(0));
            std::copy(src + lo - g.pad + kj, src + hi - g.pad + kj, row + lo);
            std::fill(row + hi, row + g.wo, T(0));
            continue;
          }
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            row[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, T* dx) {
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* src = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          T* dst = dx + (c * g.h + ih) * g.w;
          const T* row = src + oh * g.wo;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_columns(g, kj);
            T* d = dst - g.pad + kj;
            for (std::int64_t ow = lo; ow < hi; ++ow) d[ow] += row[ow];
            continue;
          }
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.w) dst[iw] += row[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " vs weight " +
                     to_string(w.shape()));
  }
  if (stride <= 0 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0,
             stride, padding};
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) {
    throw ShapeError("conv2d: kernel " + to_string(w.shape()) + " larger than padded input " +
                     to_string(x.shape()));
  }
  std::vector<T> y(g.n * g.o * g.cols());
  const T* xv = x.data().data();
  const T* wv = w.data().data();
  parallel_for(g.n, [&](std::int64_t n) {
    const T* xn = xv + n * g.c * g.h * g.w;
    std::vector<T> buf;
    const T* col = xn;
    if (!g.pointwise()) {
      buf.resize(g.rows() * g.cols());
      im2col(xn, g, buf.data());
      col = buf.data();
    }
    MapM<T>(y.data() + n * g.o * g.cols(), g.o, g.cols()).noalias() =
        MapC<T>(wv, g.o, g.rows()) * MapC<T>(col, g.rows(), g.cols());
  });

  return make_op<T>("conv2d", {g.n, g.o, g.ho, g.wo}, std::move(y), {x, w}, [g](Node<T>& self) {
    const T* xv = self.inputs[0]->value.data();
    const T* wv = self.inputs[1]->value.data();
    T* gx = grad_target(self.inputs[0]);
    T* gw = grad_target(self.inputs[1]);
    // Per-image weight partials, summed in ascending order afterwards so the
    // result does not depend on the thread count.
    std::vector<T> partial(gw ? g.n * g.o * g.rows() : 0);
    parallel_for(g.n, [&](std::int64_t n) {
      MapC<T> dy(self.grad.data() + n * g.o * g.cols(), g.o, g.cols());
      const T* xn = xv + n * g.c * g.h * g.w;
      if (gw) {
        std::vector<T> buf;
        const T* col = xn;
        if (!g.pointwise()) {
          buf.resize(g.rows() * g.cols());
          im2col(xn, g, buf.data());
          col = buf.data();
        }
        MapM<T>(partial.data() + n * g.o * g.rows(), g.o, g.rows()).noalias() =
            dy * MapC<T>(col, g.rows(), g.cols()).transpose();
      }
      if (gx) {
        T* dxn = gx + n * g.c * g.h * g.w;
        if (g.pointwise()) {
          MapM<T>(dxn, g.c, g.cols()).noalias() += MapC<T>(wv, g.o, g.rows()).transpose() * dy;
        } else {
          RowMat<T> dcol = MapC<T>(wv, g.o, g.rows()).transpose() * dy;
          col2im(dcol.data(), g, dxn);
        }
      }
    });
    if (gw) {
      const std::int64_t len = g.o * g.rows();
      for (std::int64_t n = 0; n < g.n; ++n) {
        const T* src = partial.data() + n * len;
        for (std::int64_t i = 0; i < len; ++i) gw[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_rank("upsample_nearest2x", x, 4);
  const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> y(planes * 4 * h * w);
  const T* xv = x.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t i = 0; i < h; ++i) {
      const T* src = xv + (p * h + i) * w;
      T* r0 = y.data() + (p * 2 * h + 2 * i) * 2 * w;
      T* r1 = r0 + 2 * w;
      for (std::int64_t j = 0; j < w; ++j) r0[2 * j] = r0[2 * j + 1] = src[j];
      std::copy(r0, r0 + 2 * w, r1);
    }
  }
  return make_op<T>("upsample_nearest2x", {x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(y), {x},
                    [planes, h, w](Node<T>& self) {
                      T* g = grad_target(self.inputs[0]);
                      if (!g) return;
                      for (std::int64_t p = 0; p < planes; ++p) {
                        for (std::int64_t i = 0; i < h; ++i) {
                          const T* r0 = self.grad.data() + (p * 2 * h + 2 * i) * 2 * w;
                          const T* r1 = r0 + 2 * w;
                          T* dst = g + (p * h + i) * w;
                          for (std::int64_t j = 0; j < w; ++j) {
                            dst[j] += (r0[2 * j] + r0[2 * j + 1]) + (r1[2 * j] + r1[2 * j + 1]);
                          }
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.ndim(), "softmax");
  const auto sp = split_at(x.shape(), ax);
  std::vector<T> y(x.numel());
  const T* xv = x.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      const std::int64_t base = o * sp.dim * sp.inner + i;
      T mx = xv[base];
      for (std::int64_t d = 1; d < sp.dim; ++d) mx = std::max(mx, xv[base + d * sp.inner]);
      T total = 0;
      for (std::int64_t d = 0; d < sp.dim; ++d) {
        const T e = std::exp(xv[base + d * sp.inner] - mx);
        y[base + d * sp.inner] = e;
        total += e;
      }
      for (std::int64_t d = 0; d < sp.dim; ++d) y[base + d * sp.inner] /= total;
    }
  }
  return make_op<T>("softmax", x.shape(), std::move(y), {x}, [sp](Node<T>& self) {
    T* g = grad_target(self.inputs[0]);
    if (!g) return;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        const std::int64_t base = o * sp.dim * sp.inner + i;
        T dot = 0;
        for (std::int64_t d = 0; d < sp.dim; ++d) {
          const auto k = base + d * sp.inner;
          dot += self.grad[k] * self.value[k];
        }
        for (std::int64_t d = 0; d < sp.dim; ++d) {
          const auto k = base + d * sp.inner;
          g[k] += self.value[k] * (self.grad[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  if (x.ndim() < 1) throw ShapeError("layer_norm: scalar input");
  const std::int64_t d = x.dim(-1);
  const std::int64_t rows = static_cast<std::int64_t>(x.numel()) / std::max<std::int64_t>(d, 1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " +
                     to_string(beta.shape()) + " vs input " + to_string(x.shape()));
  }
  std::vector<T> y(x.numel()), xhat(x.numel()), inv(rows);
  const T* xv = x.data().data();
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    double m = 0;
    for (std::int64_t j = 0; j < d; ++j) m += row[j];
    m /= static_cast<double>(d);
    double v = 0;
    for (std::int64_t j = 0; j < d; ++j) v += (row[j] - m) * (row[j] - m);
    v /= static_cast<double>(d);
    const T is = static_cast<T>(1.0 / std::sqrt(v + eps));
    inv[r] = is;
    for (std::int64_t j = 0; j < d; ++j) {
      const T h = (row[j] - static_cast<T>(m)) * is;
      xhat[r * d + j] = h;
      y[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_op<T>(
      "layer_norm", x.shape(), std::move(y), {x, gamma, beta},
      [d, rows, xhat = std::move(xhat), inv = std::move(inv)](Node<T>& self) {
        const T* gv = self.inputs[1]->value.data();
        T* gx = grad_target(self.inputs[0]);
        T* gg = grad_target(self.inputs[1]);
        T* gb = grad_target(self.inputs[2]);
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* dy = self.grad.data() + r * d;
          const T* h = xhat.data() + r * d;
          if (gg || gb) {
            for (std::int64_t j = 0; j < d; ++j) {
              if (gg) gg[j] += dy[j] * h[j];
              if (gb) gb[j] += dy[j];
            }
          }
          if (gx) {
            T s1 = 0, s2 = 0;
            for (std::int64_t j = 0; j < d; ++j) {
              const T dh = dy[j] * gv[j];
              s1 += dh;
              s2 += dh * h[j];
            }
            const T k = inv[r] / static_cast<T>(d);
            for (std::int64_t j = 0; j < d; ++j) {
              const T dh = dy[j] * gv[j];
              gx[r * d + j] += k * (static_cast<T>(d) * dh - s1 - h[j] * s2);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double eps) {
  if (x.ndim() < 2) throw ShapeError("batch_norm: need [N, C, ...], got " + to_string(x.shape()));
  const auto sp = split_at(x.shape(), 1);
  const Shape cs{sp.dim};
  if (gamma.shape() != cs || beta.shape() != cs || running_mean.shape() != cs ||
      running_var.shape() != cs) {
    throw ShapeError("batch_norm: per-channel parameters must be " + to_string(cs) +
                     " for input " + to_string(x.shape()));
  }
  const std::int64_t count = sp.outer * sp.inner;
  std::vector<T> mean_c(sp.dim), inv(sp.dim);
  const T* xv = x.data().data();
  if (training) {
    if (count < 2) throw ShapeError("batch_norm: training mode needs more than one value per channel");
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::int64_t c = 0; c < sp.dim; ++c) {
      double m = 0;
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        const T* p = xv + (o * sp.dim + c) * sp.inner;
        for (std::int64_t i = 0; i < sp.inner; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0;
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        const T* p = xv + (o * sp.dim + c) * sp.inner;
        for (std::int64_t i = 0; i < sp.inner; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double biased = v / static_cast<double>(count);
      const double unbiased = v / static_cast<double>(count - 1);
      mean_c[c] = static_cast<T>(m);
      inv[c] = static_cast<T>(1.0 / std::sqrt(biased + eps));
      rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * m);
      rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
    }
  } else {
    for (std::int64_t c = 0; c < sp.dim; ++c) {
      mean_c[c] = running_mean.data()[c];
      inv[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) + eps));
    }
  }
  std::vector<T> y(x.numel()), xhat(x.numel());
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t c = 0; c < sp.dim; ++c) {
      const std::int64_t base = (o * sp.dim + c) * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        const T h = (xv[base + i] - mean_c[c]) * inv[c];
        xhat[base + i] = h;
        y[base + i] = h * gv[c] + bv[c];
      }
    }
  }
  return make_op<T>(
      "batch_norm", x.shape(), std::move(y), {x, gamma, beta},
      [sp, count, training, xhat = std::move(xhat), inv = std::move(inv)](Node<T>& self) {
        const T* gv = self.inputs[1]->value.data();
        T* gx = grad_target(self.inputs[0]);
        T* gg = grad_target(self.inputs[1]);
        T* gb = grad_target(self.inputs[2]);
        for (std::int64_t c = 0; c < sp.dim; ++c) {
          T sdy = 0, sdyh = 0;
          for (std::int64_t o = 0; o < sp.outer; ++o) {
            const std::int64_t base = (o * sp.dim + c) * sp.inner;
            for (std::int64_t i = 0; i < sp.inner; ++i) {
              sdy += self.grad[base + i];
              sdyh += self.grad[base + i] * xhat[base + i];
            }
          }
          if (gg) gg[c] += sdyh;
          if (gb) gb[c] += sdy;
          if (!gx) continue;
          const T k = gv[c] * inv[c];
          const T invm = T(1) / static_cast<T>(count);
          for (std::int64_t o = 0; o < sp.outer; ++o) {
            const std::int64_t base = (o * sp.dim + c) * sp.inner;
            for (std::int64_t i = 0; i < sp.inner; ++i) {
              const T dy = self.grad[base + i];
              gx[base + i] += training ? k * (dy - invm * sdy - xhat[base + i] * invm * sdyh)
                                       : k * dy;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != static_cast<std::int64_t>(x.numel())) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  return make_op<T>("reshape", std::move(shape), std::move(y), {x}, [](Node<T>& self) {
    if (T* g = grad_target(self.inputs[0])) accumulate(g, self.grad.data(), self.grad.size());
  });
}

namespace {

// Calls f(out_index, in_index) for every element of the permuted tensor.
template <typename F>
void for_each_permuted(const Shape& in_shape, const std::vector<int>& perm, F&& f) {
  const int nd = static_cast<int>(in_shape.size());
  std::vector<std::int64_t> in_stride(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  std::vector<std::int64_t> out_shape(nd), stride(nd);
  for (int i = 0; i < nd; ++i) {
    out_shape[i] = in_shape[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  const std::int64_t total = numel(in_shape);
  if (total == 0) return;
  if (nd == 0) {
    f(0, 0);
    return;
  }
  std::vector<std::int64_t> idx(nd, 0);
  std::int64_t src = 0;
  const std::int64_t last = out_shape[nd - 1], last_stride = stride[nd - 1];
  for (std::int64_t out = 0; out < total; out += last) {
    for (std::int64_t j = 0; j < last; ++j) f(out + j, src + j * last_stride);
    for (int k = nd - 2; k >= 0; --k) {
      src += stride[k];
      if (++idx[k] < out_shape[k]) break;
      src -= stride[k] * out_shape[k];
      idx[k] = 0;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const int nd = x.ndim();
  std::vector<int> sorted(perm);
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> iota(nd);
  std::iota(iota.begin(), iota.end(), 0);
  if (static_cast<int>(perm.size()) != nd || sorted != iota) {
    throw ShapeError("permute: invalid permutation for shape " + to_string(x.shape()));
  }
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = x.shape()[perm[i]];
  std::vector<T> y(x.numel());
  const T* xv = x.data().data();
  for_each_permuted(x.shape(), perm, [&](std::int64_t o, std::int64_t i) { y[o] = xv[i]; });
  return make_op<T>("permute", std::move(out_shape), std::move(y), {x}, [perm](Node<T>& self) {
    T* g = grad_target(self.inputs[0]);
    if (!g) return;
    for_each_permuted(self.inputs[0]->shape, perm,
                      [&](std::int64_t o, std::int64_t i) { g[i] += self.grad[o]; });
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const int ax = normalize_axis(axis, xs[0].ndim(), "concat");
  Shape out_shape = xs[0].shape();
  out_shape[ax] = 0;
  for (const auto& t : xs) {
    Shape a = t.shape(), b = xs[0].shape();
    if (a.size() != b.size()) {
      throw ShapeError("concat: rank mismatch " + to_string(a) + " vs " + to_string(b));
    }
    a[ax] = b[ax] = 0;
    if (a != b) {
      throw ShapeError("concat: shape mismatch " + to_string(t.shape()) + " vs " +
                       to_string(xs[0].shape()) + " along axis " + std::to_string(ax));
    }
    out_shape[ax] += t.shape()[ax];
  }
  const auto sp = split_at(out_shape, ax);
  std::vector<std::int64_t> chunk(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) chunk[k] = xs[k].shape()[ax] * sp.inner;
  const std::int64_t row = sp.dim * sp.inner;
  std::vector<T> y(numel(out_shape));
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    std::int64_t off = o * row;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const T* src = xs[k].data().data() + o * chunk[k];
      std::copy(src, src + chunk[k], y.data() + off);
      off += chunk[k];
    }
  }
  return make_op<T>("concat", std::move(out_shape), std::move(y), xs,
                    [sp, chunk, row](Node<T>& self) {
                      for (std::int64_t o = 0; o < sp.outer; ++o) {
                        std::int64_t off = o * row;
                        for (std::size_t k = 0; k < chunk.size(); ++k) {
                          if (T* g = grad_target(self.inputs[k])) {
                            accumulate(g + o * chunk[k], self.grad.data() + off, chunk[k]);
                          }
                          off += chunk[k];
                        }
                      }
                    });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
  const int ax = normalize_axis(axis, x.ndim(), "slice");
  const auto sp = split_at(x.shape(), ax);
  if (start < 0 || length < 0 || start + length > sp.dim) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis " + std::to_string(ax) + " of " + to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::vector<T> y(numel(out_shape));
  const std::int64_t len = length * sp.inner;
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    const T* src = x.data().data() + (o * sp.dim + start) * sp.inner;
    std::copy(src, src + len, y.data() + o * len);
  }
  return make_op<T>("slice", std::move(out_shape), std::move(y), {x},
                    [sp, start, len](Node<T>& self) {
                      T* g = grad_target(self.inputs[0]);
                      if (!g) return;
                      for (std::int64_t o = 0; o < sp.outer; ++o) {
                        accumulate(g + (o * sp.dim + start) * sp.inner,
                                   self.grad.data() + o * len, len);
                      }
                    });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.ndim(), "sum");
  const auto sp = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + ax);
  std::vector<T> y(sp.outer * sp.inner, T(0));
  const T* xv = x.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t d = 0; d < sp.dim; ++d) {
      const T* src = xv + (o * sp.dim + d) * sp.inner;
      T* dst = y.data() + o * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  return make_op<T>("sum", std::move(out_shape), std::move(y), {x}, [sp](Node<T>& self) {
    T* g = grad_target(self.inputs[0]);
    if (!g) return;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t d = 0; d < sp.dim; ++d) {
        accumulate(g + (o * sp.dim + d) * sp.inner, self.grad.data() + o * sp.inner, sp.inner);
      }
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.ndim(), "mean");
  return scale(sum(x, ax), T(1) / static_cast<T>(x.shape()[ax]));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_op<T>("sum_all", {}, {total}, {x}, [](Node<T>& self) {
    T* g = grad_target(self.inputs[0]);
    if (!g) return;
    const T d = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) g[i] += d;
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

#define PANELNET_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> maximum(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> bias_add(const Tensor<T>&, const Tensor<T>&, int);                      \
  template Tensor<T> add_tiled(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> gelu(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> softplus(const Tensor<T>&);                                             \
  template Tensor<T> log(const Tensor<T>&);                                                  \
  template Tensor<T> exp(const Tensor<T>&);                                                  \
  template Tensor<T> abs(const Tensor<T>&);                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, int);                   \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                   \
  template Tensor<T> softmax(const Tensor<T>&, int);                                         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                Tensor<T>&, Tensor<T>&, bool, double, double);               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                     \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                             \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);               \
  template Tensor<T> sum(const Tensor<T>&, int);                                             \
  template Tensor<T> mean(const Tensor<T>&, int);                                            \
  template Tensor<T> sum_all(const Tensor<T>&);                                              \
  template Tensor<T> mean_all(const Tensor<T>&);

PANELNET_INSTANTIATE_OPS(float)
PANELNET_INSTANTIATE_OPS(double)

}  // namespace panelnet::ad
