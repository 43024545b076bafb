#include "panelnet/panel_merge.hpp"

#include <string>
#include <vector>

#include "panelnet/errors.hpp"
#include "panelnet/panel_pipeline.hpp"

namespace panelnet {

template <typename T>
ad::Tensor<T> panels_to_tensor(std::span<const ErpTensor> erps, const PanelConfig& cfg) {
  cfg.validate();
  if (erps.empty()) throw ShapeError("panels_to_tensor: no scenes");
  const int c = erps.front().channels();
  std::vector<T> values;
  values.reserve(erps.size() * cfg.num_panels() * static_cast<std::size_t>(c) * cfg.height *
                 cfg.interval);
  for (const auto& erp : erps) {
    if (erp.channels() != c) throw ShapeError("panels_to_tensor: channel count differs across scenes");
    const auto set = partition_erp(erp, cfg);
    for (const auto& p : set.panels) values.insert(values.end(), p.data().begin(), p.data().end());
  }
  const std::int64_t rows = static_cast<std::int64_t>(erps.size()) * cfg.num_panels();
  return ad::Tensor<T>::from_vector({rows, c, cfg.height, cfg.interval}, std::move(values));
}

template <typename T>
ad::Tensor<T> merge_panel_tensor(const ad::Tensor<T>& pred, const ad::Tensor<T>& conf,
                                 const PanelConfig& cfg, int batch) {
  cfg.validate();
  const std::int64_t n = cfg.num_panels(), h = cfg.height, iv = cfg.interval, w = cfg.width;
  if (pred.ndim() != 4 || pred.dim(0) != batch * n || pred.dim(2) != h || pred.dim(3) != iv) {
    throw ShapeError("merge: predictions " + ad::to_string(pred.shape()) + " do not match " +
                     std::to_string(batch) + " scenes of " + std::to_string(n) + " panels " +
                     std::to_string(h) + "x" + std::to_string(iv));
  }
  const std::int64_t c = pred.dim(1);
  const bool weighted = conf.defined();
  if (weighted && conf.shape() != ad::Shape{batch * n, 1, h, iv}) {
    throw ShapeError("merge: confidences " + ad::to_string(conf.shape()) + " vs predictions " +
                     ad::to_string(pred.shape()));
  }
  const std::int64_t plane = h * w;
  std::vector<double> den(static_cast<std::size_t>(batch * plane), 0.0);
  std::vector<double> num(static_cast<std::size_t>(batch * c * plane), 0.0);
  const T* pv = pred.data().data();
  const T* cv = weighted ? conf.data().data() : nullptr;
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t p = 0; p < n; ++p) {
      const std::int64_t row = b * n + p;
      for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t j = 0; j < iv; ++j) {
          const std::int64_t col = cfg.erp_column(static_cast<int>(p), static_cast<int>(j));
          const double wt = weighted ? static_cast<double>(cv[(row * h + r) * iv + j]) : 1.0;
          den[b * plane + r * w + col] += wt;
          for (std::int64_t k = 0; k < c; ++k) {
            num[(b * c + k) * plane + r * w + col] += wt * pv[((row * c + k) * h + r) * iv + j];
          }
        }
      }
    }
  }
  std::vector<T> out(num.size());
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t px = 0; px < plane; ++px) {
      const double d = den[b * plane + px];
      if (!(d > 0.0)) {
        throw MergeError("merge: zero total weight at scene " + std::to_string(b) + " pixel (" +
                         std::to_string(px / w) + ", " + std::to_string(px % w) + ")");
      }
      for (std::int64_t k = 0; k < c; ++k) {
        out[(b * c + k) * plane + px] = static_cast<T>(num[(b * c + k) * plane + px] / d);
      }
    }
  }
  std::vector<ad::Tensor<T>> inputs{pred};
  if (weighted) inputs.push_back(conf);
  return ad::make_op<T>(
      "merge_panels", {batch, c, h, w}, std::move(out), inputs,
      [cfg, batch, n, h, iv, w, c, plane, weighted, den = std::move(den)](ad::Node<T>& self) {
        T* gp = ad::grad_target(self.inputs[0]);
        T* gc = weighted ? ad::grad_target(self.inputs[1]) : nullptr;
        const T* pv = self.inputs[0]->value.data();
        const T* cv = weighted ? self.inputs[1]->value.data() : nullptr;
        for (std::int64_t b = 0; b < batch; ++b) {
          for (std::int64_t p = 0; p < n; ++p) {
            const std::int64_t row = b * n + p;
            for (std::int64_t r = 0; r < h; ++r) {
              for (std::int64_t j = 0; j < iv; ++j) {
                const std::int64_t col = cfg.erp_column(static_cast<int>(p), static_cast<int>(j));
                const std::int64_t px = r * w + col;
                const double inv = 1.0 / den[b * plane + px];
                const double wt = weighted ? static_cast<double>(cv[(row * h + r) * iv + j]) : 1.0;
                double dconf = 0.0;
                for (std::int64_t k = 0; k < c; ++k) {
                  const std::int64_t o = (b * c + k) * plane + px;
                  const std::int64_t i = ((row * c + k) * h + r) * iv + j;
                  const double g = self.grad[o];
                  if (gp) gp[i] += static_cast<T>(g * wt * inv);
                  dconf += g * (static_cast<double>(pv[i]) - self.value[o]) * inv;
                }
                if (gc) gc[(row * h + r) * iv + j] += static_cast<T>(dconf);
              }
            }
          }
        }
      });
}

template <typename T>
ErpTensor tensor_to_erp(const ad::Tensor<T>& t, int index) {
  if (t.ndim() != 4 || index < 0 || index >= t.dim(0)) {
    throw ShapeError("tensor_to_erp: cannot take scene " + std::to_string(index) + " of " +
                     ad::to_string(t.shape()));
  }
  const std::int64_t per = t.dim(1) * t.dim(2) * t.dim(3);
  const T* src = t.data().data() + index * per;
  std::vector<float> values(src, src + per);
  return ErpTensor(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)),
                   static_cast<int>(t.dim(3)), std::move(values));
}

template ad::Tensor<float> panels_to_tensor(std::span<const ErpTensor>, const PanelConfig&);
template ad::Tensor<double> panels_to_tensor(std::span<const ErpTensor>, const PanelConfig&);
template ad::Tensor<float> merge_panel_tensor(const ad::Tensor<float>&, const ad::Tensor<float>&,
                                              const PanelConfig&, int);
template ad::Tensor<double> merge_panel_tensor(const ad::Tensor<double>&,
                                               const ad::Tensor<double>&, const PanelConfig&, int);
template ErpTensor tensor_to_erp(const ad::Tensor<float>&, int);
template ErpTensor tensor_to_erp(const ad::Tensor<double>&, int);

}  // namespace panelnet
