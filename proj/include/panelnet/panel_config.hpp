#pragma once

namespace panelnet {

// Sliding-window layout of panels over an ERP of size height x width.
struct PanelConfig {
  int interval = 128;  // panel width in columns
  int stride = 32;     // window step in columns
  int width = 1024;    // ERP width
  int height = 512;    // ERP height

  // Throws ConfigError unless stride | width, stride | interval,
  // interval <= width and all fields are positive.
  void validate() const;

  int num_panels() const { return width / stride; }
  // Number of panels covering any ERP column.
  int coverage() const { return interval / stride; }
  // ERP column of panel column j of panel n.
  int erp_column(int panel, int j) const { return (panel * stride + j) % width; }
};

}  // namespace panelnet
