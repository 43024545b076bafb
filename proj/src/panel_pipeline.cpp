#include "panelnet/panel_pipeline.hpp"

#include <string>

#include "panelnet/errors.hpp"

namespace panelnet {

PanelSet partition_erp(const ErpTensor& erp, const PanelConfig& cfg) {
  cfg.validate();
  if (erp.width() != cfg.width || erp.height() != cfg.height) {
    throw ConfigError("partition: ERP is " + std::to_string(erp.height()) + "x" +
                      std::to_string(erp.width()) + ", config expects " +
                      std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  PanelSet set;
  set.config = cfg;
  const int n = cfg.num_panels();
  set.panels.reserve(n);
  for (int p = 0; p < n; ++p) {
    ErpTensor panel(erp.channels(), cfg.height, cfg.interval);
    for (int c = 0; c < erp.channels(); ++c) {
      for (int r = 0; r < cfg.height; ++r) {
        for (int j = 0; j < cfg.interval; ++j) {
          panel.at(c, r, j) = erp.at(c, r, cfg.erp_column(p, j));
        }
      }
    }
    set.panels.push_back(std::move(panel));
  }
  return set;
}

namespace {

void check_panels(const PanelSet& set, const PanelConfig& cfg, const char* what,
                  std::optional<int> channels) {
  if (static_cast<int>(set.panels.size()) != cfg.num_panels()) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(cfg.num_panels()) +
                     " panels, got " + std::to_string(set.panels.size()));
  }
  const int c0 = set.panels.front().channels();
  for (const auto& p : set.panels) {
    if (p.height() != cfg.height || p.width() != cfg.interval || p.channels() != c0 ||
        (channels && p.channels() != *channels)) {
      throw ShapeError(std::string(what) + ": panel shape " + std::to_string(p.channels()) +
                       "x" + std::to_string(p.height()) + "x" + std::to_string(p.width()) +
                       " does not match " + std::to_string(channels.value_or(c0)) + "x" +
                       std::to_string(cfg.height) + "x" + std::to_string(cfg.interval));
    }
  }
}

}  // namespace

ErpTensor merge_panels(const PanelSet& preds, const PanelSet* confidences, const PanelConfig& cfg) {
  cfg.validate();
  check_panels(preds, cfg, "merge predictions", std::nullopt);
  if (confidences) check_panels(*confidences, cfg, "merge confidences", 1);

  const int channels = preds.panels.front().channels();
  const std::size_t plane = static_cast<std::size_t>(cfg.height) * cfg.width;
  std::vector<double> num(static_cast<std::size_t>(channels) * plane, 0.0);
  std::vector<double> den(plane, 0.0);

  for (int p = 0; p < cfg.num_panels(); ++p) {
    const auto& pred = preds.panels[p];
    for (int r = 0; r < cfg.height; ++r) {
      for (int j = 0; j < cfg.interval; ++j) {
        const int col = cfg.erp_column(p, j);
        const double w = confidences ? confidences->panels[p].at(0, r, j) : 1.0;
        const std::size_t px = static_cast<std::size_t>(r) * cfg.width + col;
        den[px] += w;
        for (int c = 0; c < channels; ++c) num[c * plane + px] += w * pred.at(c, r, j);
      }
    }
  }

  ErpTensor out(channels, cfg.height, cfg.width);
  for (std::size_t px = 0; px < plane; ++px) {
    if (!(den[px] > 0.0)) {
      throw MergeError("merge: zero total weight at ERP pixel (" +
                       std::to_string(px / cfg.width) + ", " + std::to_string(px % cfg.width) +
                       ")");
    }
    for (int c = 0; c < channels; ++c) {
      out.data()[c * plane + px] = static_cast<float>(num[c * plane + px] / den[px]);
    }
  }
  return out;
}

std::vector<int> covering_panels(int column, const PanelConfig& cfg) {
  cfg.validate();
  std::vector<int> out;
  for (int p = 0; p < cfg.num_panels(); ++p) {
    const int offset = ((column - p * cfg.stride) % cfg.width + cfg.width) % cfg.width;
    if (offset < cfg.interval) out.push_back(p);
  }
  return out;
}

}  // namespace panelnet
