#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "panelnet/kv_config.hpp"
#include "panelnet/panel_config.hpp"

namespace panelnet {

enum class Task { kDepth, kSegmentation, kLayout };

std::string to_string(Task t);
// Accepts depth, seg, segmentation, layout.
Task parse_task(std::string_view s);

enum class MergeMode { kConfidence, kUniform };

std::string to_string(MergeMode m);
MergeMode parse_merge_mode(std::string_view s);

struct WindowStage {
  int patch = 1;   // P: tokens are P x P feature patches
  int blocks = 2;
  int heads = 2;

  bool operator==(const WindowStage&) const = default;
};

struct L2GConfig {
  // Applied in order; small patches first.
  std::vector<WindowStage> window_stages{{1, 2, 2}, {2, 2, 4}, {4, 2, 4}};
  int panel_blocks = 6;
  int panel_heads = 8;
  int mlp_ratio = 4;
  // Panel blocks ahead of the window stages. Supported, not the default.
  bool panel_first = false;

  int total_blocks() const;
};

std::string format_window_stages(const std::vector<WindowStage>& stages);
std::vector<WindowStage> parse_window_stages(std::string_view text);

struct ModelConfig {
  Task task = Task::kDepth;
  PanelConfig panel{128, 32, 1024, 512};

  // Residual encoder: stem to /4 then four stages reaching /32.
  std::vector<int> encoder_widths{64, 128, 256, 512};
  std::vector<int> encoder_blocks{3, 4, 6, 3};
  // 1x1 reduction width, four skip-connected up stages, final x2 stage.
  std::vector<int> decoder_widths{256, 256, 128, 64, 32, 32};

  bool use_geometry = true;
  int geometry_hidden = 64;
  int ref_panel = 0;

  // Panel-token length D = C_b * H_b * W_b.
  int token_dim = 512;
  L2GConfig l2g;
  bool zero_init_residual = false;

  double max_depth = 10.0;
  // Initial depth prediction, realised through the head bias.
  double depth_init = 3.0;
  int num_classes = 4;
  int boundary_length = 1024;

  int feature_height() const { return panel.height / 32; }
  int feature_width() const { return panel.interval / 32; }
  int feature_channels() const;
  int output_channels() const;

  // Throws ConfigError on any divisibility or range violation.
  void validate() const;

  // "full" mirrors the ResNet-34 widths and block counts; "desk" and "tiny"
  // are reduced for CPU training and gradient checks. Window stages keep the
  // patch sizes from {1, 2, 4} that divide the feature map.
  static ModelConfig preset(std::string_view scale, Task task, const PanelConfig& panel);

  // Reads model keys from `kv` on top of the preset chosen by `scale`.
  static ModelConfig from_keys(const KeyValueConfig& kv);
  std::string serialize() const;
  static ModelConfig deserialize(std::string_view text);

  bool operator==(const ModelConfig&) const;
};

}  // namespace panelnet
