#pragma once

#include <span>

#include "panelnet/ad/tensor.hpp"
#include "panelnet/erp_tensor.hpp"
#include "panelnet/panel_config.hpp"

namespace panelnet {

// Partitions `batch` ERPs into one [batch * N, C, H, interval] tensor,
// scene-major then panel index.
template <typename T>
ad::Tensor<T> panels_to_tensor(std::span<const ErpTensor> erps, const PanelConfig& cfg);

// Differentiable counterpart of merge_panels over a batch of scenes.
// pred: [batch * N, C, H, interval]; conf: [batch * N, 1, H, interval] or
// undefined for uniform weights. Returns [batch, C, H, W].
template <typename T>
ad::Tensor<T> merge_panel_tensor(const ad::Tensor<T>& pred, const ad::Tensor<T>& conf,
                                 const PanelConfig& cfg, int batch);

// Scene `index` of a [batch, C, H, W] tensor as a raster.
template <typename T>
ErpTensor tensor_to_erp(const ad::Tensor<T>& t, int index);

}  // namespace panelnet
