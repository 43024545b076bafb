#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "panelnet/ad/gradcheck.hpp"
#include "panelnet/errors.hpp"
#include "panelnet/harness.hpp"
#include "panelnet/losses.hpp"
#include "panelnet/nn/local2global.hpp"
#include "panelnet/panel_merge.hpp"

namespace panelnet {

namespace {

using ad::GradCheckOptions;
using ad::GradCheckReport;
using D = Tensor<double>;
using Inputs = std::vector<D>;

struct Case {
  std::string module;
  std::string name;
  std::function<GradCheckReport(std::uint64_t seed)> run;
};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  D tensor(ad::Shape shape, double lo = -1, double hi = 1) {
    std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
    for (auto& x : v) x = uniform(lo, hi);
    return D::from_vector(std::move(shape), std::move(v));
  }
  // Magnitudes in [0.1, 1] with random sign: clear of kinks at zero.
  D away_from_zero(ad::Shape shape) {
    auto t = tensor(std::move(shape), 0.1, 1.0);
    for (auto& x : t.mutable_data()) x = uniform(0, 1) < 0.5 ? -x : x;
    return t;
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Random linear functional so every output element carries a distinct weight.
D probe(const D& y, std::uint64_t seed) {
  Gen g(seed ^ 0x9b05688c2b3e6c1full);
  return ad::sum_all(ad::mul(y, g.tensor(y.shape())));
}

GradCheckReport check(const std::function<D(const Inputs&)>& f, Inputs inputs, std::uint64_t seed,
                      GradCheckOptions opts = {}) {
  opts.seed = seed;
  return ad::gradient_check([&](const Inputs& in) { return probe(f(in), seed); }, std::move(inputs), opts);
}

// Checks a scalar function directly, without the probe.
GradCheckReport check_scalar(const ad::ScalarFn& f, Inputs inputs, std::uint64_t seed, GradCheckOptions opts = {}) {
  opts.seed = seed;
  return ad::gradient_check(f, std::move(inputs), opts);
}

template <typename Store>
Inputs parameters_of(Store& ps, const std::string& prefix = "") {
  Inputs out;
  for (auto& p : ps.parameters()) {
    if (p.name.rfind(prefix, 0) == 0) out.push_back(p.tensor);
  }
  return out;
}

Inputs concat_inputs(Inputs a, const Inputs& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

ModelConfig tiny_config(Task task = Task::kDepth) {
  return ModelConfig::preset("tiny", task, PanelConfig{32, 16, 64, 64});
}

std::vector<Case> op_cases() {
  std::vector<Case> c;
  const auto unary = [&c](const std::string& name, std::function<D(const D&)> op,
                          std::function<D(Gen&)> make) {
    c.push_back({"ops", name, [op, make](std::uint64_t seed) {
                   Gen g(seed);
                   return check([&](const Inputs& in) { return op(in[0]); }, {make(g)}, seed);
                 }});
  };
  const auto plain = [](ad::Shape s) { return [s](Gen& g) { return g.tensor(s); }; };
  unary("relu", ad::relu<double>, [](Gen& g) { return g.away_from_zero({3, 4, 5}); });
  unary("abs", ad::abs<double>, [](Gen& g) { return g.away_from_zero({3, 4, 5}); });
  unary("gelu", ad::gelu<double>, plain({3, 4, 5}));
  unary("sigmoid", ad::sigmoid<double>, plain({3, 4, 5}));
  unary("softplus", ad::softplus<double>, plain({3, 4, 5}));
  unary("exp", ad::exp<double>, plain({3, 4, 5}));
  unary("log", ad::log<double>, [](Gen& g) { return g.tensor({3, 4, 5}, 0.2, 2.0); });
  unary("scale", [](const D& x) { return ad::scale(x, -1.7); }, plain({2, 7}));
  unary("add_scalar", [](const D& x) { return ad::mul(ad::add_scalar(x, 0.3), x); }, plain({2, 7}));
  unary("upsample_nearest2x", ad::upsample_nearest2x<double>, plain({2, 3, 3, 4}));
  unary("reshape", [](const D& x) { return ad::reshape(x, {4, 15}); }, plain({3, 4, 5}));
  unary("permute", [](const D& x) { return ad::permute(x, {2, 0, 3, 1}); }, plain({2, 3, 4, 5}));
  unary("slice", [](const D& x) { return ad::slice(x, 1, 1, 2); }, plain({3, 4, 5}));
  for (int axis = 0; axis < 3; ++axis) {
    unary("softmax_axis" + std::to_string(axis), [axis](const D& x) { return ad::softmax(x, axis); }, plain({3, 4, 5}));
    unary("sum_axis" + std::to_string(axis), [axis](const D& x) { return ad::sum(x, axis); }, plain({3, 4, 5}));
    unary("mean_axis" + std::to_string(axis), [axis](const D& x) { return ad::mean(x, axis); }, plain({3, 4, 5}));
  }
  unary("sum_all", [](const D& x) { return ad::mul(ad::sum_all(x), ad::sum_all(x)); }, plain({3, 4}));
  unary("mean_all", [](const D& x) { return ad::mul(ad::mean_all(x), ad::sum_all(x)); }, plain({3, 4}));
  unary("clamp", [](const D& x) { return clamp(x, -0.5, 0.5); },
        [](Gen& g) {
          auto t = g.tensor({4, 6});
          for (auto& v : t.mutable_data()) {
            if (std::abs(std::abs(v) - 0.5) < 0.05) v *= 0.8;
          }
          return t;
        });

  const auto binary = [&c](const std::string& name, std::function<D(const D&, const D&)> op,
                           std::function<Inputs(Gen&)> make) {
    c.push_back({"ops", name, [op, make](std::uint64_t seed) {
                   Gen g(seed);
                   return check([&](const Inputs& in) { return op(in[0], in[1]); }, make(g), seed);
                 }});
  };
  const auto pair = [](ad::Shape a, ad::Shape b) {
    return [a, b](Gen& g) { return Inputs{g.tensor(a), g.tensor(b)}; };
  };
  binary("add", ad::add<double>, pair({3, 4}, {3, 4}));
  binary("sub", ad::sub<double>, pair({3, 4}, {3, 4}));
  binary("mul", ad::mul<double>, pair({3, 4}, {3, 4}));
  binary("maximum", ad::maximum<double>, [](Gen& g) {
    auto a = g.tensor({3, 4});
    auto b = g.away_from_zero({3, 4});
    for (std::size_t i = 0; i < a.numel(); ++i) b.mutable_data()[i] += a.data()[i];
    return Inputs{a, b};
  });
  binary("bias_add_axis1", [](const D& x, const D& b) { return ad::bias_add(x, b, 1); }, pair({2, 3, 4, 2}, {3}));
  binary("bias_add_last", [](const D& x, const D& b) { return ad::bias_add(x, b, -1); }, pair({2, 3, 5}, {5}));
  binary("add_tiled", ad::add_tiled<double>, pair({3, 4, 5}, {4, 5}));
  binary("matmul", ad::matmul<double>, pair({3, 5}, {5, 4}));
  binary("bmm", ad::bmm<double>, pair({2, 3, 5}, {2, 5, 4}));
  binary("concat_axis1", [](const D& a, const D& b) { return ad::concat<double>({a, b}, 1); }, pair({2, 3, 4}, {2, 2, 4}));
  binary("concat_axis0", [](const D& a, const D& b) { return ad::concat<double>({a, b}, 0); }, pair({1, 3}, {2, 3}));

  struct ConvCase {
    int k, stride, pad, h, w;
  };
  for (const auto& cc : {ConvCase{3, 1, 1, 5, 6}, ConvCase{3, 2, 1, 7, 6}, ConvCase{1, 1, 0, 4, 5},
                         ConvCase{3, 1, 0, 5, 5}, ConvCase{1, 2, 0, 6, 4}, ConvCase{5, 2, 2, 8, 7}}) {
    const std::string name = "conv2d_k" + std::to_string(cc.k) + "s" + std::to_string(cc.stride) + "p" +
                             std::to_string(cc.pad);
    c.push_back({"ops", name, [cc](std::uint64_t seed) {
                   Gen g(seed);
                   return check([&](const Inputs& in) { return ad::conv2d(in[0], in[1], cc.stride, cc.pad); },
                                {g.tensor({2, 3, cc.h, cc.w}), g.tensor({4, 3, cc.k, cc.k})}, seed);
                 }});
  }
  c.push_back({"ops", "layer_norm", [](std::uint64_t seed) {
                 Gen g(seed);
                 return check([](const Inputs& in) { return ad::layer_norm(in[0], in[1], in[2]); },
                              {g.tensor({3, 4, 6}), g.tensor({6}, 0.5, 1.5), g.tensor({6})}, seed);
               }});
  for (bool training : {true, false}) {
    c.push_back({"ops", training ? "batch_norm_train" : "batch_norm_eval", [training](std::uint64_t seed) {
                   Gen g(seed);
                   auto rm = g.tensor({3}, -0.2, 0.2);
                   auto rv = g.tensor({3}, 0.5, 1.5);
                   return check([&](const Inputs& in) { return ad::batch_norm(in[0], in[1], in[2], rm, rv, training); },
                                {g.tensor({4, 3, 3, 2}), g.tensor({3}, 0.5, 1.5), g.tensor({3})}, seed);
                 }});
  }
  c.push_back({"ops", "attention", [](std::uint64_t seed) {
                 Gen g(seed);
                 return check([](const Inputs& in) { return nn::scaled_dot_product_attention(in[0], in[1], in[2], 2); },
                              {g.tensor({2, 5, 6}), g.tensor({2, 5, 6}), g.tensor({2, 5, 6})}, seed);
               }});
  c.push_back({"ops", "merge_panels", [](std::uint64_t seed) {
                 Gen g(seed);
                 const PanelConfig cfg{8, 4, 16, 3};
                 const std::int64_t n = cfg.num_panels();
                 return check([&](const Inputs& in) { return merge_panel_tensor(in[0], in[1], cfg, 2); },
                              {g.tensor({2 * n, 2, 3, 8}), g.tensor({2 * n, 1, 3, 8}, 0.1, 1.0)}, seed);
               }});
  c.push_back({"ops", "merge_panels_uniform", [](std::uint64_t seed) {
                 Gen g(seed);
                 const PanelConfig cfg{8, 2, 16, 3};
                 return check([&](const Inputs& in) { return merge_panel_tensor(in[0], D(), cfg, 1); },
                              {g.tensor({cfg.num_panels(), 2, 3, 8})}, seed);
               }});
  return c;
}

std::vector<Case> block_cases() {
  std::vector<Case> c;
  c.push_back({"attention", "multi_head_self_attention", [](std::uint64_t seed) {
                 nn::ParameterStore<double> ps(seed);
                 nn::MultiHeadSelfAttention<double> attn(ps, "attn", 8, 2, false);
                 Gen g(seed);
                 return check([&](const Inputs& in) { return attn(in[0]); },
                              concat_inputs({g.tensor({2, 4, 8})}, parameters_of(ps)), seed);
               }});
  for (int patch : {1, 2}) {
    c.push_back({"window_block", "window_block_p" + std::to_string(patch), [patch](std::uint64_t seed) {
                   const int ch = 3, h = 4, w = 2;
                   nn::ParameterStore<double> ps(seed);
                   nn::TransformerBlock<double> block(ps, "block", patch * patch * ch, patch == 1 ? 1 : 2, 2, false);
                   Gen g(seed);
                   const auto pos = g.tensor({h * w / (patch * patch), patch * patch * ch}, -0.1, 0.1);
                   return check([&](const Inputs& in) { return nn::window_block(in[0], patch, block, in[1]); },
                                concat_inputs({g.tensor({2, ch, h, w}), pos}, parameters_of(ps)), seed);
                 }});
  }
  c.push_back({"panel_block", "panel_block", [](std::uint64_t seed) {
                 nn::ParameterStore<double> ps(seed);
                 nn::TransformerBlock<double> block(ps, "block", 8, 2, 2, false);
                 Gen g(seed);
                 return check([&](const Inputs& in) { return block(ad::add_tiled(in[0], in[1])); },
                              concat_inputs({g.tensor({2, 5, 8}), g.tensor({5, 8}, -0.1, 0.1)}, parameters_of(ps)),
                              seed);
               }});
  c.push_back({"panel_block", "local2global", [](std::uint64_t seed) {
                 const auto cfg = tiny_config();
                 nn::ParameterStore<double> ps(seed);
                 nn::Local2Global<double> l2g(ps, "l2g", cfg);
                 Gen g(seed);
                 const std::int64_t m = cfg.panel.num_panels();
                 GradCheckOptions opts;
                 opts.max_elements_per_input = 24;
                 return check([&](const Inputs& in) { return l2g(in[0], 1); },
                              concat_inputs({g.tensor({m, cfg.feature_channels(), cfg.feature_height(), cfg.feature_width()})},
                                            parameters_of(ps)),
                              seed, opts);
               }});
  for (int k = 0; k < 5; ++k) {
    c.push_back({"decode_stage", "decode_stage" + std::to_string(k), [k](std::uint64_t seed) {
                   const auto cfg = tiny_config();
                   PanelNet<double> net(cfg, seed);
                   Gen g(seed);
                   const std::int64_t m = 2;
                   const std::int64_t h = cfg.feature_height() << k, w = cfg.feature_width() << k;
                   const auto x = g.tensor({m, cfg.decoder_widths[k], h, w});
                   Inputs inputs{x};
                   D skip;
                   if (k < 4) {
                     skip = g.tensor({m, cfg.encoder_widths[3 - k], h, w});
                     inputs.push_back(skip);
                   }
                   const auto params = parameters_of(net.store(), "decoder.up" + std::to_string(k) + ".");
                   const bool has_skip = k < 4;
                   GradCheckOptions opts;
                   opts.kink_guard = true;
                   opts.max_elements_per_input = 48;
                   // Weight perturbations move every pre-activation; keep the step small.
                   opts.eps = 1e-6;
                   return check([&](const Inputs& in) {
                                  return net.decode_stage(k, in[0], has_skip ? in[1] : D(), true);
                                },
                                concat_inputs(inputs, params), seed, opts);
                 }});
  }
  return c;
}

std::vector<Case> loss_cases() {
  std::vector<Case> c;
  c.push_back({"losses", "berhu", [](std::uint64_t seed) {
                 Gen g(seed);
                 auto gt_t = g.tensor({40}, 0.5, 5.0);
                 std::vector<float> gt(gt_t.data().begin(), gt_t.data().end());
                 gt[3] = 0.0f;  // invalid pixel
                 auto pred = g.tensor({40}, 0.5, 5.0);
                 for (std::size_t i = 0; i < gt.size(); ++i) {
                   pred.mutable_data()[i] = static_cast<double>(gt[i]) + g.uniform(-1.0, 1.0);
                 }
                 // Stay clear of the |e| = c junction, e = 0 and ties for the max.
                 double mx = 0;
                 for (std::size_t i = 0; i < gt.size(); ++i) {
                   if (gt[i] > 0) mx = std::max(mx, std::abs(pred.data()[i] - gt[i]));
                 }
                 const double cth = 0.2 * mx;
                 const std::vector<double> p0(pred.data().begin(), pred.data().end());
                 GradCheckOptions opts;
                 opts.skip = [=](std::size_t, std::size_t i) {
                   const double e = std::abs(p0[i] - gt[i]);
                   return std::abs(e - cth) < 1e-3 || e < 1e-3 || (e < mx && e > mx - 1e-3);
                 };
                 return check_scalar([&](const Inputs& in) { return berhu_loss(in[0], gt); }, {pred}, seed, opts);
               }});
  c.push_back({"losses", "cross_entropy", [](std::uint64_t seed) {
                 Gen g(seed);
                 std::vector<std::uint8_t> labels(2 * 3 * 4);
                 for (auto& l : labels) l = static_cast<std::uint8_t>(g.rng()() % 4);
                 labels[5] = kIgnoreLabel;
                 const std::vector<double> w{1.0, 0.5, 2.0, 1.5};
                 return check_scalar([&](const Inputs& in) { return weighted_cross_entropy(in[0], labels, w); },
                                     {g.tensor({2, 4, 3, 4}, -2, 2)}, seed);
               }});
  c.push_back({"losses", "horizon_depth", [](std::uint64_t seed) {
                 Gen g(seed);
                 const std::vector<double> cam{1.3, 1.7};
                 return check([&](const Inputs& in) { return boundary_to_horizon_depth(in[0], cam); },
                              {g.tensor({2, 6}, 1.75, 2.9)}, seed);
               }});
  c.push_back({"losses", "layout", [](std::uint64_t seed) {
                 Gen g(seed);
                 const std::vector<double> cam{1.3, 1.7}, gt_h{2.6, 3.1};
                 std::vector<double> gt_b(12);
                 for (auto& v : gt_b) v = g.uniform(1.75, 2.9);
                 auto pred_b = g.tensor({2, 6}, 1.75, 2.9);
                 auto pred_h = g.tensor({2}, 2.0, 3.5);
                 const std::vector<double> b0(pred_b.data().begin(), pred_b.data().end());
                 const std::vector<double> h0(pred_h.data().begin(), pred_h.data().end());
                 GradCheckOptions opts;
                 opts.skip = [=](std::size_t input, std::size_t i) {
                   if (input == 1) return std::abs(h0[i] - gt_h[i]) < 1e-3;
                   const double c0 = cam[i / 6];
                   return std::abs(horizon_depth(b0[i], c0) - horizon_depth(gt_b[i], c0)) < 1e-3;
                 };
                 return check_scalar([&](const Inputs& in) { return layout_loss(in[0], in[1], gt_b, gt_h, cam); },
                                     {pred_b, pred_h}, seed, opts);
               }});
  return c;
}

std::vector<Case> model_cases() {
  std::vector<Case> c;
  for (Task task : {Task::kDepth, Task::kSegmentation, Task::kLayout}) {
    c.push_back({"model", "end_to_end_" + to_string(task), [task](std::uint64_t seed) {
                   auto cfg = tiny_config(task);
                   PanelNet<double> net(cfg, seed);
                   Gen g(seed);
                   // At init an all-zero patch lands exactly on a relu kink after eval-mode
                   // normalisation; move the statistics and shifts off that point.
                   auto jitter = [&g](D& t, double lo, double hi) {
                     for (auto& v : t.mutable_data()) v = g.uniform(lo, hi);
                   };
                   for (auto& b : net.store().buffers()) {
                     const bool var = b.name.ends_with("running_var");
                     jitter(b.tensor, var ? 0.5 : -0.1, var ? 1.5 : 0.1);
                   }
                   for (auto& p : net.store().parameters()) {
                     if (p.name.ends_with(".bn.bias") || p.name.ends_with(".bn1.bias") || p.name.ends_with(".bn2.bias")) {
                       jitter(p.tensor, -0.1, 0.1);
                     }
                   }
                   const auto panels = g.tensor({cfg.panel.num_panels(), 3, cfg.panel.height, cfg.panel.interval}, 0, 1);
                   GradCheckOptions opts;
                   opts.max_elements_per_input = 3;
                   opts.eps = 1e-5;
                   // Whole-network differences carry round-off near 1e-7 in absolute terms.
                   opts.floor = 1e-4;
                   opts.kink_guard = true;
                   // Probing the change from the starting output keeps the large constant depth
                   // offset out of the differenced sums.
                   D base;
                   {
                     ad::NoGradGuard ng;
                     base = net.forward(panels, 1, false).merged.detach();
                   }
                   return check_scalar(
                       [&](const Inputs&) {
                         // Eval-mode normalisation; batch statistics are covered by the op and stage checks.
                         const auto out = net.forward(panels, 1, false);
                         if (task != Task::kLayout) return probe(ad::sub(out.merged, base), seed);
                         return ad::add(probe(out.boundary, seed), probe(out.height, seed + 1));
                       },
                       concat_inputs({}, parameters_of(net.store())), seed, opts);
                 }});
  }
  return c;
}

std::vector<Case> all_cases() {
  auto c = op_cases();
  for (auto&& v : {block_cases(), loss_cases(), model_cases()}) c.insert(c.end(), v.begin(), v.end());
  return c;
}

}  // namespace

std::vector<std::string> gradcheck_modules() {
  return {"all", "ops", "attention", "window_block", "panel_block", "decode_stage", "losses", "model"};
}

std::vector<GradCheckOutcome> run_gradchecks(const std::string& module, int seeds) {
  const auto mods = gradcheck_modules();
  if (std::find(mods.begin(), mods.end(), module) == mods.end()) {
    throw ConfigError("gradcheck: unknown module '" + module + "'");
  }
  std::vector<GradCheckOutcome> out;
  for (const auto& c : all_cases()) {
    if (module != "all" && c.module != module) continue;
    GradCheckOutcome o{c.module + "/" + c.name, true, 0.0, 0, 0, ""};
    for (int s = 0; s < seeds; ++s) {
      const auto rep = c.run(static_cast<std::uint64_t>(s + 1));
      o.checked += rep.checked;
      o.skipped += rep.skipped_kinks;
      if (rep.max_rel_error >= o.max_rel_error) {
        o.max_rel_error = rep.max_rel_error;
        o.detail = "seed " + std::to_string(s + 1) + ": " + rep.worst;
      }
      o.passed = o.passed && rep.passed;
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace panelnet
