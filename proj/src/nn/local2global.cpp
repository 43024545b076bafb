#include "panelnet/nn/local2global.hpp"

#include "panelnet/errors.hpp"

namespace panelnet::nn {

template <typename T>
Tensor<T> patchify(const Tensor<T>& f, int patch) {
  if (f.ndim() != 4) throw ShapeError("patchify: expected [M, C, H, W], got " + ad::to_string(f.shape()));
  const auto m = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
  if (patch <= 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("patchify: patch " + std::to_string(patch) + " does not divide " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  const std::int64_t p = patch, hp = h / p, wp = w / p;
  auto x = ad::reshape(f, {m, c, hp, p, wp, p});
  x = ad::permute(x, {0, 2, 4, 3, 5, 1});  // [M, Hp, Wp, P, P, C]
  return ad::reshape(x, {m, hp * wp, p * p * c});
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, int patch, std::int64_t c, std::int64_t h,
                     std::int64_t w) {
  const std::int64_t p = patch, hp = h / p, wp = w / p;
  const auto m = tokens.dim(0);
  if (tokens.shape() != Shape{m, hp * wp, p * p * c}) {
    throw ShapeError("unpatchify: tokens " + ad::to_string(tokens.shape()) + " do not form " +
                     std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w) +
                     " with patch " + std::to_string(patch));
  }
  auto x = ad::reshape(tokens, {m, hp, wp, p, p, c});
  x = ad::permute(x, {0, 5, 1, 3, 2, 4});  // [M, C, Hp, P, Wp, P]
  return ad::reshape(x, {m, c, h, w});
}

template <typename T>
Tensor<T> window_block(const Tensor<T>& f, int patch, const TransformerBlock<T>& block,
                       const Tensor<T>& pos) {
  auto tokens = patchify(f, patch);
  if (pos.defined()) tokens = ad::add_tiled(tokens, pos);
  return unpatchify(block(tokens), patch, f.dim(1), f.dim(2), f.dim(3));
}

template <typename T>
Local2Global<T>::Local2Global(ParameterStore<T>& ps, const std::string& name,
                              const ModelConfig& cfg)
    : channels_(cfg.feature_channels()),
      height_(cfg.feature_height()),
      width_(cfg.feature_width()),
      panels_(cfg.panel.num_panels()),
      dim_(cfg.token_dim),
      panel_first_(cfg.l2g.panel_first) {
  const bool zero = cfg.zero_init_residual;
  for (std::size_t s = 0; s < cfg.l2g.window_stages.size(); ++s) {
    const auto& ws = cfg.l2g.window_stages[s];
    const std::string prefix = name + ".window" + std::to_string(s);
    Stage stage;
    stage.patch = ws.patch;
    const int tokens = height_ * width_ / (ws.patch * ws.patch);
    const int dim = ws.patch * ws.patch * channels_;
    stage.pos = ps.parameter(prefix + ".pos_embed", {tokens, dim}, Init::normal(0.02));
    for (int b = 0; b < ws.blocks; ++b) {
      stage.blocks.emplace_back(ps, prefix + ".block" + std::to_string(b), dim, ws.heads,
                                cfg.l2g.mlp_ratio, zero);
    }
    stages_.push_back(std::move(stage));
  }
  panel_pos_ = ps.parameter(name + ".panel.pos_embed", {panels_, dim_}, Init::normal(0.02));
  for (int b = 0; b < cfg.l2g.panel_blocks; ++b) {
    panel_.emplace_back(ps, name + ".panel.block" + std::to_string(b), dim_, cfg.l2g.panel_heads,
                        cfg.l2g.mlp_ratio, zero);
  }
}

template <typename T>
int Local2Global<T>::block_count() const {
  int n = static_cast<int>(panel_.size());
  for (const auto& s : stages_) n += static_cast<int>(s.blocks.size());
  return n;
}

template <typename T>
Tensor<T> Local2Global<T>::window_stage(const Tensor<T>& f, std::size_t s) const {
  const auto& stage = stages_.at(s);
  auto tokens = ad::add_tiled(patchify(f, stage.patch), stage.pos);
  for (const auto& block : stage.blocks) tokens = block(tokens);
  return unpatchify(tokens, stage.patch, channels_, height_, width_);
}

template <typename T>
Tensor<T> Local2Global<T>::panel_blocks(const Tensor<T>& tokens) const {
  Tensor<T> z = tokens;
  for (const auto& block : panel_) z = block(z);
  return z;
}

template <typename T>
Tensor<T> Local2Global<T>::panel_stage(const Tensor<T>& f, int batch) const {
  // C_b * H_b * W_b == D, so compressing a panel map to its token is a flatten.
  auto tokens = ad::add_tiled(ad::reshape(f, {batch, panels_, dim_}), panel_pos_);
  return ad::reshape(panel_blocks(tokens), {batch * panels_, channels_, height_, width_});
}

template <typename T>
Tensor<T> Local2Global<T>::operator()(const Tensor<T>& f, int batch) const {
  const Shape expect{static_cast<std::int64_t>(batch) * panels_, channels_, height_, width_};
  if (f.shape() != expect) {
    throw ShapeError("local2global: input " + ad::to_string(f.shape()) + ", expected " +
                     ad::to_string(expect));
  }
  Tensor<T> x = f;
  if (panel_first_) x = panel_stage(x, batch);
  for (std::size_t s = 0; s < stages_.size(); ++s) x = window_stage(x, s);
  if (!panel_first_) x = panel_stage(x, batch);
  return x;
}

template Tensor<float> patchify(const Tensor<float>&, int);
template Tensor<double> patchify(const Tensor<double>&, int);
template Tensor<float> unpatchify(const Tensor<float>&, int, std::int64_t, std::int64_t, std::int64_t);
template Tensor<double> unpatchify(const Tensor<double>&, int, std::int64_t, std::int64_t,
                                   std::int64_t);
template Tensor<float> window_block(const Tensor<float>&, int, const TransformerBlock<float>&,
                                    const Tensor<float>&);
template Tensor<double> window_block(const Tensor<double>&, int, const TransformerBlock<double>&,
                                     const Tensor<double>&);
template class Local2Global<float>;
template class Local2Global<double>;

}  // namespace panelnet::nn
