#include <doctest.h>

#include <cmath>
#include <numbers>

#include "common.hpp"
#include "panelnet/errors.hpp"
#include "panelnet/model.hpp"
#include "panelnet/panel_merge.hpp"
#include "panelnet/panel_pipeline.hpp"

using namespace panelnet;

namespace {

ModelConfig tiny(Task task) { return ModelConfig::preset("tiny", task, PanelConfig{32, 16, 64, 64}); }

template <typename T>
ad::Tensor<T> random_panels(const ModelConfig& cfg, int batch, std::uint64_t seed) {
  std::vector<ErpTensor> erps;
  for (int b = 0; b < batch; ++b) {
    auto e = test::random_erp(seed + b, 3, cfg.panel.height, cfg.panel.width);
    for (auto& v : e.storage()) v = 0.5f + 0.5f * v;
    erps.push_back(std::move(e));
  }
  return panels_to_tensor<T>(erps, cfg.panel);
}

}  // namespace

TEST_CASE("structural sizes of the full configuration") {
  for (Task task : {Task::kDepth, Task::kSegmentation, Task::kLayout}) {
    const auto cfg = ModelConfig::preset("full", task, PanelConfig{128, 32, 1024, 512});
    CHECK(cfg.feature_height() == 16);
    CHECK(cfg.feature_width() == 4);
    CHECK(cfg.feature_channels() == 8);
    CHECK(cfg.feature_channels() * cfg.feature_height() * cfg.feature_width() == 512);
    CHECK_NOTHROW(cfg.validate());
  }
}

TEST_CASE("config validation rejects incompatible sizes") {
  auto cfg = tiny(Task::kDepth);
  cfg.panel.height = 48;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny(Task::kDepth);
  cfg.token_dim = 30;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::preset("huge", Task::kDepth, PanelConfig{}), ConfigError);
}

TEST_CASE("config text round trip") {
  auto cfg = tiny(Task::kLayout);
  cfg.max_depth = 12.5;
  const auto back = ModelConfig::deserialize(cfg.serialize());
  CHECK(back == cfg);
  CHECK(back.serialize() == cfg.serialize());
}

TEST_CASE("forward shapes per task") {
  for (Task task : {Task::kDepth, Task::kSegmentation, Task::kLayout}) {
    const auto cfg = tiny(task);
    PanelNet<float> net(cfg, 1);
    const int n = cfg.panel.num_panels();
    const auto out = net.forward(random_panels<float>(cfg, 2, 3), 2, true);
    CHECK(out.panel_pred.shape() == ad::Shape{2 * n, cfg.output_channels(), 64, 32});
    CHECK(out.panel_conf.shape() == ad::Shape{2 * n, 1, 64, 32});
    CHECK(out.merged.shape() == ad::Shape{2, cfg.output_channels(), 64, 64});
    if (task == Task::kLayout) {
      CHECK(out.boundary.shape() == ad::Shape{2, 64});
      CHECK(out.height.shape() == ad::Shape{2});
      for (float v : out.boundary.data()) {
        CHECK(v > std::numbers::pi / 2);
        CHECK(v < std::numbers::pi);
      }
      for (float v : out.height.data()) CHECK(v > 0);
    } else {
      CHECK_FALSE(out.boundary.defined());
    }
  }
}

TEST_CASE("depth starts near the configured initial depth") {
  const auto cfg = tiny(Task::kDepth);
  PanelNet<float> net(cfg, 2);
  const auto out = net.forward(random_panels<float>(cfg, 1, 5), 1, false);
  double mean = 0;
  for (float v : out.merged.data()) {
    CHECK(v > 0);
    CHECK(v < cfg.max_depth);
    mean += v;
  }
  mean /= static_cast<double>(out.merged.numel());
  CHECK(std::abs(mean - cfg.depth_init) < 0.5);
  CHECK(1.0 / (1.0 + std::exp(-depth_bias(3.0, 10.0))) * 10.0 == doctest::Approx(3.0));
}

TEST_CASE("panel tensors merge like the raster pipeline") {
  const PanelConfig cfg{32, 8, 64, 16};
  const auto a = test::random_erp(1, 2, 16, 64), b = test::random_erp(2, 2, 16, 64);
  const std::vector<ErpTensor> erps{a, b};
  const auto t = panels_to_tensor<double>(erps, cfg);
  CHECK(t.shape() == ad::Shape{16, 2, 16, 32});
  const auto conf = ad::sigmoid(ad::slice(panels_to_tensor<double>(erps, cfg), 1, 0, 1));
  const auto merged = merge_panel_tensor(t, conf, cfg, 2);
  for (int s = 0; s < 2; ++s) {
    PanelSet preds = partition_erp(erps[s], cfg), confs;
    confs.config = cfg;
    for (int p = 0; p < 8; ++p) confs.panels.push_back(tensor_to_erp(ad::slice(conf, 0, s * 8 + p, 1), 0));
    const auto want = merge_panels(preds, &confs, cfg);
    const auto got = tensor_to_erp(merged, s);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-6));
  }
  const auto uniform = merge_panel_tensor(t, ad::Tensor<double>(), cfg, 2);
  const auto ub = tensor_to_erp(uniform, 1);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(ub.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-6));
}

TEST_CASE("float and double models agree") {
  const auto cfg = tiny(Task::kSegmentation);
  PanelNet<float> nf(cfg, 4);
  PanelNet<double> nd(cfg, 4);
  const auto of = nf.forward(random_panels<float>(cfg, 1, 9), 1, false);
  const auto od = nd.forward(random_panels<double>(cfg, 1, 9), 1, false);
  for (std::size_t i = 0; i < of.merged.numel(); ++i) {
    CHECK(of.merged.data()[i] == doctest::Approx(od.merged.data()[i]).epsilon(1e-3).scale(1.0));
  }
}

TEST_CASE("same seed builds identical parameters") {
  const auto cfg = tiny(Task::kDepth);
  PanelNet<float> a(cfg, 11), b(cfg, 11), c(cfg, 12);
  bool differs = false;
  for (std::size_t i = 0; i < a.store().parameters().size(); ++i) {
    const auto& pa = a.store().parameters()[i].tensor;
    const auto& pb = b.store().parameters()[i].tensor;
    const auto& pc = c.store().parameters()[i].tensor;
    CHECK(std::equal(pa.data().begin(), pa.data().end(), pb.data().begin()));
    differs |= !std::equal(pa.data().begin(), pa.data().end(), pc.data().begin());
  }
  CHECK(differs);
}

TEST_CASE("geometry embedding has one map per panel at stem resolution") {
  const auto cfg = tiny(Task::kDepth);
  PanelNet<float> net(cfg, 1);
  CHECK(net.geometry_input().shape() == ad::Shape{cfg.panel.num_panels(), 5, 16, 8});
  CHECK(net.geometry_embedding().shape() == ad::Shape{cfg.panel.num_panels(), cfg.encoder_widths[0], 16, 8});
}

TEST_CASE("boundary clamp counts and blocks gradients at the limits") {
  auto x = ad::Tensor<double>::from_vector({4}, {0.0, 1.0, 2.0, 3.0}, true);
  std::int64_t moved = 0;
  auto y = clamp(x, 0.5, 2.5, &moved);
  CHECK(moved == 2);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{0.5, 1.0, 2.0, 2.5});
  ad::sum_all(y).backward();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0, 1, 1, 0});
}

TEST_CASE("forward rejects a wrong panel batch") {
  const auto cfg = tiny(Task::kDepth);
  PanelNet<float> net(cfg, 1);
  CHECK_THROWS_AS(net.forward(random_panels<float>(cfg, 1, 1), 2, false), ShapeError);
}
