#include "panelnet/model.hpp"

#include <cmath>
#include <numbers>

#include "panelnet/erp_geometry.hpp"
#include "panelnet/errors.hpp"
#include "panelnet/panel_merge.hpp"

namespace panelnet {

namespace {

std::string idx(const std::string& prefix, int i) { return prefix + std::to_string(i); }

}  // namespace

double depth_bias(double depth_init, double max_depth) {
  const double r = depth_init / max_depth;
  return std::log(r / (1.0 - r));
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi, std::int64_t* clamped) {
  std::vector<T> out(x.data().begin(), x.data().end());
  std::vector<std::uint8_t> pass(out.size(), 1);
  std::int64_t moved = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < lo || out[i] > hi || std::isnan(out[i])) {
      out[i] = std::isnan(out[i]) ? lo : std::min(std::max(out[i], lo), hi);
      pass[i] = 0;
      ++moved;
    }
  }
  if (clamped) *clamped = moved;
  return ad::make_op<T>("clamp", x.shape(), std::move(out), {x},
                        [pass = std::move(pass)](ad::Node<T>& self) {
                          T* g = ad::grad_target(self.inputs[0]);
                          if (!g) return;
                          for (std::size_t i = 0; i < pass.size(); ++i) {
                            if (pass[i]) g[i] += self.grad[i];
                          }
                        });
}

template <typename T>
BasicBlock<T>::BasicBlock(nn::ParameterStore<T>& ps, const std::string& name, int in, int out,
                          int stride)
    : conv1(ps, name + ".conv1", in, out, 3, stride, 1, false, nn::Init::normal(nn::he_std(9 * in))),
      conv2(ps, name + ".conv2", out, out, 3, 1, 1, false, nn::Init::normal(nn::he_std(9 * out))),
      has_downsample(stride != 1 || in != out) {
  bn1 = nn::BatchNorm2d<T>(ps, name + ".bn1", out);
  bn2 = nn::BatchNorm2d<T>(ps, name + ".bn2", out);
  if (has_downsample) {
    down = nn::Conv2d<T>(ps, name + ".downsample.conv", in, out, 1, stride, 0, false,
                         nn::Init::normal(nn::he_std(in)));
    down_bn = nn::BatchNorm2d<T>(ps, name + ".downsample.bn", out);
  }
}

template <typename T>
Tensor<T> BasicBlock<T>::operator()(const Tensor<T>& x, bool training) {
  auto y = ad::relu(bn1(conv1(x), training));
  y = bn2(conv2(y), training);
  const auto shortcut = has_downsample ? down_bn(down(x), training) : x;
  return ad::relu(ad::add(y, shortcut));
}

template <typename T>
PanelNet<T>::PanelNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
  cfg_.validate();
  auto& ps = store_;
  const auto& ew = cfg_.encoder_widths;
  const auto& dw = cfg_.decoder_widths;
  const bool zero = cfg_.zero_init_residual;

  // Parameters are created in a fixed order; initial values depend on it.
  if (cfg_.use_geometry) {
    const auto geo = build_panel_geometry(cfg_.panel, cfg_.ref_panel, 4);
    auto values = geo.embedding_input();
    const std::int64_t n = cfg_.panel.num_panels();
    geometry_input_ = Tensor<T>::from_vector(
        {n, 5, cfg_.panel.height / 4, cfg_.panel.interval / 4},
        std::vector<T>(values.begin(), values.end()));
    geo_fc1 = nn::Conv2d<T>(ps, "geometry.fc1", 5, cfg_.geometry_hidden, 1, 1, 0, true,
                            nn::Init::normal(nn::he_std(5)));
    geo_fc2 = nn::Conv2d<T>(ps, "geometry.fc2", cfg_.geometry_hidden, ew[0], 1, 1, 0, true,
                            zero ? nn::Init::zeros() : nn::Init::normal(0.02));
  }

  stem_conv1 = nn::Conv2d<T>(ps, "encoder.stem.conv1", 3, ew[0], 3, 2, 1, false,
                             nn::Init::normal(nn::he_std(27)));
  stem_bn1 = nn::BatchNorm2d<T>(ps, "encoder.stem.bn1", ew[0]);
  stem_conv2 = nn::Conv2d<T>(ps, "encoder.stem.conv2", ew[0], ew[0], 3, 2, 1, false,
                             nn::Init::normal(nn::he_std(9 * ew[0])));
  stem_bn2 = nn::BatchNorm2d<T>(ps, "encoder.stem.bn2", ew[0]);

  int in = ew[0];
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg_.encoder_blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      stages_[s].emplace_back(ps, idx("encoder.stage", s + 1) + idx(".block", b), in, ew[s], stride);
      in = ew[s];
    }
  }
  const int cb = cfg_.feature_channels();
  enc_reduce_ = nn::Conv2d<T>(ps, "encoder.reduce", ew[3], cb, 1, 1, 0, true,
                              nn::Init::normal(nn::he_std(ew[3])));

  l2g_ = nn::Local2Global<T>(ps, "l2g", cfg_);

  dec_reduce_ = nn::Conv2d<T>(ps, "decoder.reduce", cb, dw[0], 1, 1, 0, true,
                              nn::Init::normal(nn::he_std(cb)));
  for (int k = 0; k < 5; ++k) {
    const int cin = dw[k] + (k < 4 ? ew[3 - k] : 0);
    dec_[k].conv = nn::Conv2d<T>(ps, idx("decoder.up", k) + ".conv", cin, dw[k + 1], 3, 1, 1, false,
                                 nn::Init::normal(nn::he_std(9 * cin)));
    dec_[k].bn = nn::BatchNorm2d<T>(ps, idx("decoder.up", k) + ".bn", dw[k + 1]);
  }

  const int f = dw[5];
  const int cout = cfg_.output_channels();
  head_task_ = nn::Conv2d<T>(ps, "head.task", f, cout, 1, 1, 0, true,
                             nn::Init::normal(cfg_.task == Task::kLayout ? nn::he_std(f) : 1.0 / std::sqrt(f)));
  if (cfg_.task == Task::kDepth) {
    head_task_.bias.mutable_data()[0] = static_cast<T>(depth_bias(cfg_.depth_init, cfg_.max_depth));
  }
  head_conf_ = nn::Conv2d<T>(ps, "head.confidence", f, 1, 1, 1, 0, true, nn::Init::normal(0.01));

  if (cfg_.task == Task::kLayout) {
    boundary_fc_ = nn::Linear<T>(ps, "layout.boundary", cout, 1, nn::Init::normal(0.01));
    height_fc1_ = nn::Linear<T>(ps, "layout.height.fc1", cout, 256, nn::Init::normal(nn::he_std(cout)));
    height_fc2_ = nn::Linear<T>(ps, "layout.height.fc2", 256, 1, nn::Init::normal(0.01));
  }
}

template <typename T>
Tensor<T> PanelNet<T>::geometry_embedding() const {
  if (!cfg_.use_geometry) throw ConfigError("geometry embedding is disabled in this model");
  return geo_fc2(ad::gelu(geo_fc1(geometry_input_)));
}

template <typename T>
EncoderFeatures<T> PanelNet<T>::encode(const Tensor<T>& panels, int batch, bool training) {
  const std::int64_t n = cfg_.panel.num_panels();
  const ad::Shape want{batch * n, 3, cfg_.panel.height, cfg_.panel.interval};
  if (panels.shape() != want) {
    throw ShapeError("encode: panels " + ad::to_string(panels.shape()) + ", expected " +
                     ad::to_string(want));
  }
  auto x = ad::relu(stem_bn1(stem_conv1(panels), training));
  x = ad::relu(stem_bn2(stem_conv2(x), training));
  if (cfg_.use_geometry) {
    const auto e = geometry_embedding();
    const auto shape = x.shape();
    if (e.dim(1) != shape[1] || e.dim(2) != shape[2] || e.dim(3) != shape[3]) {
      throw ShapeError("geometry embedding " + ad::to_string(e.shape()) + " does not match stem " +
                       ad::to_string(shape));
    }
    x = ad::reshape(ad::add_tiled(ad::reshape(x, {batch, n, shape[1], shape[2], shape[3]}), e), shape);
  }
  EncoderFeatures<T> out;
  for (int s = 0; s < 4; ++s) {
    for (auto& block : stages_[s]) x = block(x, training);
    out.skips[s] = x;
  }
  out.reduced = enc_reduce_(x);
  return out;
}

template <typename T>
Tensor<T> PanelNet<T>::decode_stage(int k, const Tensor<T>& x, const Tensor<T>& skip, bool training) {
  if (k < 0 || k > 4) throw ConfigError("decode_stage: stage " + std::to_string(k) + " outside [0, 4]");
  auto y = k < 4 ? ad::concat<T>({x, skip}, 1) : x;
  y = ad::upsample_nearest2x(y);
  return ad::relu(dec_[k].bn(dec_[k].conv(y), training));
}

template <typename T>
Tensor<T> PanelNet<T>::decode(const Tensor<T>& transformed, const EncoderFeatures<T>& enc,
                              bool training) {
  auto x = dec_reduce_(transformed);
  for (int k = 0; k < 4; ++k) x = decode_stage(k, x, enc.skips[3 - k], training);
  return decode_stage(4, x, Tensor<T>(), training);
}

template <typename T>
void PanelNet<T>::layout_heads(const Tensor<T>& merged, PanelNetOutput<T>& out) const {
  const auto b = merged.dim(0), f = merged.dim(1), w = merged.dim(3);
  if (w != cfg_.boundary_length) {
    throw ShapeError("layout: merged width " + std::to_string(w) + " vs boundary length " +
                     std::to_string(cfg_.boundary_length));
  }
  const T half_pi = static_cast<T>(std::numbers::pi / 2);
  auto columns = ad::permute(ad::mean(merged, 2), {0, 2, 1});  // [B, W, F]
  auto s = ad::sigmoid(ad::reshape(boundary_fc_(columns), {b, w}));
  auto angles = ad::add_scalar(ad::scale(s, half_pi), half_pi);
  const T margin = static_cast<T>(1e-4);
  out.boundary = clamp(angles, half_pi + margin, 2 * half_pi - margin, &out.layout.clamped);

  auto pooled = ad::mean(ad::mean(merged, 3), 2);  // [B, F]
  (void)f;
  auto h = ad::relu(height_fc1_(pooled));
  out.height = ad::reshape(ad::softplus(height_fc2_(h)), {b});
}

template <typename T>
PanelNetOutput<T> PanelNet<T>::forward(const Tensor<T>& panels, int batch, bool training,
                                       MergeMode merge) {
  PanelNetOutput<T> out;
  const auto enc = encode(panels, batch, training);
  const auto features = decode(transform(enc.reduced, batch), enc, training);
  auto pred = head_task_(features);
  if (cfg_.task == Task::kDepth) {
    pred = ad::scale(ad::sigmoid(pred), static_cast<T>(cfg_.max_depth));
  }
  out.panel_pred = pred;
  out.panel_conf = ad::sigmoid(head_conf_(features));
  out.merged = merge_panel_tensor(pred, merge == MergeMode::kConfidence ? out.panel_conf : Tensor<T>(),
                                  cfg_.panel, batch);
  if (cfg_.task == Task::kLayout) layout_heads(out.merged, out);
  return out;
}

template Tensor<float> clamp(const Tensor<float>&, float, float, std::int64_t*);
template Tensor<double> clamp(const Tensor<double>&, double, double, std::int64_t*);
template struct BasicBlock<float>;
template struct BasicBlock<double>;
template class PanelNet<float>;
template class PanelNet<double>;

}  // namespace panelnet
