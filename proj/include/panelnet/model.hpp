#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "panelnet/model_config.hpp"
#include "panelnet/nn/layers.hpp"
#include "panelnet/nn/local2global.hpp"

namespace panelnet {

using ad::Tensor;

template <typename T>
struct BasicBlock {
  nn::Conv2d<T> conv1, conv2;
  nn::BatchNorm2d<T> bn1, bn2;
  bool has_downsample = false;
  nn::Conv2d<T> down;
  nn::BatchNorm2d<T> down_bn;

  BasicBlock() = default;
  BasicBlock(nn::ParameterStore<T>& ps, const std::string& name, int in, int out, int stride);
  Tensor<T> operator()(const Tensor<T>& x, bool training);
};

template <typename T>
struct EncoderFeatures {
  // Stage outputs at strides 4, 8, 16, 32.
  std::array<Tensor<T>, 4> skips;
  // 1x1-reduced final map [M, C_b, H_b, W_b].
  Tensor<T> reduced;
};

struct LayoutDiagnostics {
  // Boundary entries that hit the (pi/2, pi) limits and were clamped.
  std::int64_t clamped = 0;
};

template <typename T>
struct PanelNetOutput {
  Tensor<T> panel_pred;  // [B*N, C_out, H, I]
  Tensor<T> panel_conf;  // [B*N, 1, H, I]
  Tensor<T> merged;      // [B, C_out, H, W]
  Tensor<T> boundary;    // layout only: [B, W], polar angles
  Tensor<T> height;      // layout only: [B]
  LayoutDiagnostics layout;
};

template <typename T>
class PanelNet {
 public:
  PanelNet(const ModelConfig& cfg, std::uint64_t seed);
  PanelNet(const PanelNet&) = delete;
  PanelNet& operator=(const PanelNet&) = delete;

  // panels: [batch * N, 3, H, I] in scene-major order.
  PanelNetOutput<T> forward(const Tensor<T>& panels, int batch, bool training,
                            MergeMode merge = MergeMode::kConfidence);

  // Per-pixel MLP over the constant coordinate grid: [N, C_stem, H/4, I/4].
  Tensor<T> geometry_embedding() const;
  EncoderFeatures<T> encode(const Tensor<T>& panels, int batch, bool training);
  Tensor<T> transform(const Tensor<T>& reduced, int batch) const { return l2g_(reduced, batch); }
  // Stage k in [0, 4): concat(x, skip) -> up x2 -> conv3x3 -> BN -> relu.
  // k == 4 is the final stage without a skip.
  Tensor<T> decode_stage(int k, const Tensor<T>& x, const Tensor<T>& skip, bool training);
  Tensor<T> decode(const Tensor<T>& transformed, const EncoderFeatures<T>& enc, bool training);
  // Boundary angles [B, W] and heights [B] from merged features [B, F, H, W].
  void layout_heads(const Tensor<T>& merged, PanelNetOutput<T>& out) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore<T>& store() { return store_; }
  const nn::ParameterStore<T>& store() const { return store_; }
  nn::Local2Global<T>& l2g() { return l2g_; }
  const Tensor<T>& geometry_input() const { return geometry_input_; }

 private:
  struct DecodeStage {
    nn::Conv2d<T> conv;
    nn::BatchNorm2d<T> bn;
  };

  ModelConfig cfg_;
  nn::ParameterStore<T> store_;

  Tensor<T> geometry_input_;  // [N, 5, H/4, I/4]
  nn::Conv2d<T> geo_fc1, geo_fc2;

  nn::Conv2d<T> stem_conv1, stem_conv2;
  nn::BatchNorm2d<T> stem_bn1, stem_bn2;
  std::array<std::vector<BasicBlock<T>>, 4> stages_;
  nn::Conv2d<T> enc_reduce_;

  nn::Local2Global<T> l2g_;

  nn::Conv2d<T> dec_reduce_;
  std::array<DecodeStage, 5> dec_;
  nn::Conv2d<T> head_task_, head_conf_;

  nn::Linear<T> boundary_fc_, height_fc1_, height_fc2_;
};

// Logit placing sigmoid(b) * max_depth at depth_init.
double depth_bias(double depth_init, double max_depth);

// Clamps into [lo, hi]; the gradient is passed through unclamped entries only.
// `clamped` receives the number of entries moved.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi, std::int64_t* clamped = nullptr);

extern template class PanelNet<float>;
extern template class PanelNet<double>;

}  // namespace panelnet
