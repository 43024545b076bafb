#pragma once

#include <string>
#include <vector>

#include "panelnet/model_config.hpp"
#include "panelnet/nn/attention.hpp"

namespace panelnet::nn {

// [M, C, H, W] -> [M, H*W/P^2, P^2*C]; each token is one P x P patch
// flattened as (row-in-patch, column-in-patch, channel).
template <typename T>
Tensor<T> patchify(const Tensor<T>& f, int patch);
// Inverse of patchify for a C x H x W map.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, int patch, std::int64_t channels, std::int64_t height,
                     std::int64_t width);

// One window block on per-panel maps [M, C_b, H_b, W_b]; `pos` may be undefined.
template <typename T>
Tensor<T> window_block(const Tensor<T>& f, int patch, const TransformerBlock<T>& block,
                       const Tensor<T>& pos);

// Window stages (attention among P x P patches of one panel) followed by
// panel blocks (attention among the N flattened panel maps of one scene).
template <typename T>
class Local2Global {
 public:
  struct Stage {
    int patch = 1;
    Tensor<T> pos;  // [N_w, P^2 C_b]
    std::vector<TransformerBlock<T>> blocks;
  };

  Local2Global() = default;
  Local2Global(ParameterStore<T>& ps, const std::string& name, const ModelConfig& cfg);

  // f: [batch * N, C_b, H_b, W_b]; same shape out.
  Tensor<T> operator()(const Tensor<T>& f, int batch) const;
  Tensor<T> window_stage(const Tensor<T>& f, std::size_t stage) const;
  Tensor<T> panel_stage(const Tensor<T>& f, int batch) const;
  // Panel blocks on tokens [batch, N, D] without the positional embedding.
  Tensor<T> panel_blocks(const Tensor<T>& tokens) const;

  std::vector<Stage>& stages() { return stages_; }
  Tensor<T>& panel_pos() { return panel_pos_; }
  const std::vector<TransformerBlock<T>>& panel_block_list() const { return panel_; }
  int block_count() const;

 private:
  std::vector<Stage> stages_;
  Tensor<T> panel_pos_;  // [N, D]
  std::vector<TransformerBlock<T>> panel_;
  int channels_ = 0, height_ = 0, width_ = 0, panels_ = 0, dim_ = 0;
  bool panel_first_ = false;
};

}  // namespace panelnet::nn
