#pragma once

#include <optional>
#include <vector>

#include "panelnet/erp_tensor.hpp"
#include "panelnet/panel_config.hpp"

namespace panelnet {

struct PanelSet {
  std::vector<ErpTensor> panels;  // N tensors of C x H x interval
  PanelConfig config;
};

// Panel n column j is ERP column (n * stride + j) mod width; windows wrap
// across the left/right seam.
PanelSet partition_erp(const ErpTensor& erp, const PanelConfig& cfg);

// Weighted average of every panel covering a pixel. Weights are the
// single-channel confidences, or 1 when none are given. Accumulates in
// double in ascending panel order. Throws MergeError on zero total weight.
ErpTensor merge_panels(const PanelSet& preds, const PanelSet* confidences, const PanelConfig& cfg);

// Panel indices covering an ERP column, ascending.
std::vector<int> covering_panels(int column, const PanelConfig& cfg);

}  // namespace panelnet
