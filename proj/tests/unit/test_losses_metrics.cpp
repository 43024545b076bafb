#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "panelnet/errors.hpp"
#include "panelnet/losses.hpp"
#include "panelnet/metrics.hpp"

using namespace panelnet;
using D = ad::Tensor<double>;

namespace {

struct DepthCase {
  std::vector<float> pred, gt;
};

DepthCase random_depth(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.3f, 6.0f);
  DepthCase c;
  for (std::size_t i = 0; i < n; ++i) {
    c.gt.push_back(i % 7 == 3 ? 0.0f : u(rng));
    c.pred.push_back(u(rng));
  }
  return c;
}

}  // namespace

TEST_CASE("berhu branch values and continuity") {
  CHECK(berhu(0.1, 0.2) == doctest::Approx(0.1));
  CHECK(berhu(-0.1, 0.2) == doctest::Approx(0.1));
  CHECK(berhu(0.4, 0.2) == doctest::Approx(0.5));
  const double c = 0.37;
  CHECK(berhu(c, c) == doctest::Approx(c).epsilon(1e-15));
  CHECK(std::abs(berhu(c * (1 + 1e-9), c) - berhu(c * (1 - 1e-9), c)) < 1e-8);
  CHECK(berhu(0.0, 0.0) == 0.0);
}

TEST_CASE("berhu loss matches a scalar loop over valid pixels") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = random_depth(seed, 50);
    double mx = 0;
    for (std::size_t i = 0; i < c.gt.size(); ++i) {
      if (c.gt[i] > 0) mx = std::max(mx, std::abs(static_cast<double>(c.pred[i]) - c.gt[i]));
    }
    const double thr = 0.2 * mx;
    double sum = 0;
    int n = 0;
    for (std::size_t i = 0; i < c.gt.size(); ++i) {
      if (c.gt[i] <= 0) continue;
      const double e = std::abs(static_cast<double>(c.pred[i]) - c.gt[i]);
      sum += e <= thr ? e : (e * e + thr * thr) / (2 * thr);
      ++n;
    }
    const auto pred = D::from_vector({50}, std::vector<double>(c.pred.begin(), c.pred.end()));
    CHECK(berhu_loss(pred, c.gt).item() == doctest::Approx(sum / n).epsilon(1e-6));
    CHECK(berhu_loss_fixed(pred, c.gt, thr).item() == doctest::Approx(sum / n).epsilon(1e-6));
  }
  const std::vector<float> none(3, 0.0f);
  CHECK_THROWS_AS(berhu_loss(D::zeros({3}), none), LossError);
}

TEST_CASE("cross entropy of uniform logits is ln K") {
  for (int k : {2, 4, 7}) {
    std::vector<std::uint8_t> labels(2 * 3 * 5);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(i % k);
    const std::vector<double> w(k, 1.0);
    CHECK(weighted_cross_entropy(D::full({2, k, 3, 5}, 0.7), labels, w).item() ==
          doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
  }
}

TEST_CASE("weighted cross entropy matches a scalar loop") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3, 3);
  const int b = 2, k = 4, h = 3, w = 5;
  std::vector<double> logits(b * k * h * w);
  for (auto& v : logits) v = u(rng);
  std::vector<std::uint8_t> labels(b * h * w);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % k);
  labels[4] = kIgnoreLabel;
  const std::vector<double> cw{0.5, 1.0, 2.0, 1.5};
  double num = 0, den = 0;
  for (int n = 0; n < b; ++n) {
    for (int p = 0; p < h * w; ++p) {
      const auto y = labels[n * h * w + p];
      if (y == kIgnoreLabel) continue;
      double z = 0;
      for (int c = 0; c < k; ++c) z += std::exp(logits[(n * k + c) * h * w + p]);
      num += cw[y] * -(logits[(n * k + y) * h * w + p] - std::log(z));
      den += cw[y];
    }
  }
  CHECK(weighted_cross_entropy(D::from_vector({b, k, h, w}, logits), labels, cw).item() ==
        doctest::Approx(num / den).epsilon(1e-10));
  labels[0] = 9;
  CHECK_THROWS_AS(weighted_cross_entropy(D::from_vector({b, k, h, w}, logits), labels, cw), DataError);
  std::vector<std::uint8_t> ignored(b * h * w, kIgnoreLabel);
  CHECK_THROWS_AS(weighted_cross_entropy(D::from_vector({b, k, h, w}, logits), ignored, cw), LossError);
}

TEST_CASE("horizon depth geometry") {
  CHECK(horizon_depth(std::numbers::pi * 0.75, 1.5) == doctest::Approx(1.5));
  CHECK(horizon_depth(std::numbers::pi, 1.5) == doctest::Approx(0.0).epsilon(1e-12).scale(1));
  CHECK_THROWS_AS(horizon_depth(std::numbers::pi / 2, 1.5), GeometryError);
  CHECK_THROWS_AS(horizon_depth(3.5, 1.5), GeometryError);
  CHECK_THROWS_AS(horizon_depth(2.0, 0.0), GeometryError);
  const std::vector<double> b{2.0, 2.5};
  const auto v = boundary_to_horizon_depth(b, 1.2);
  const auto t = boundary_to_horizon_depth(D::from_vector({1, 2}, {2.0, 2.5}), std::vector<double>{1.2});
  for (int i = 0; i < 2; ++i) {
    CHECK(v[i] == doctest::Approx(1.2 / std::tan(b[i] - std::numbers::pi / 2)));
    CHECK(t.data()[i] == doctest::Approx(v[i]).epsilon(1e-12));
  }
}

TEST_CASE("layout loss is the mean horizon-depth and height error") {
  const std::vector<double> cam{1.4}, gt_b{2.2, 2.6, 2.9}, gt_h{2.8};
  const auto pb = D::from_vector({1, 3}, {2.3, 2.5, 2.9});
  const auto ph = D::from_vector({1}, {3.0});
  double e = 0;
  for (int i = 0; i < 3; ++i) e += std::abs(horizon_depth(pb.data()[i], 1.4) - horizon_depth(gt_b[i], 1.4));
  CHECK(layout_loss(pb, ph, gt_b, gt_h, cam).item() == doctest::Approx(e / 3 + 0.2).epsilon(1e-12));
}

TEST_CASE("depth metrics match scalar loops") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = random_depth(seed, 200);
    double mre = 0, mae = 0, se = 0, sl = 0;
    double d[3] = {0, 0, 0};
    int n = 0;
    for (std::size_t i = 0; i < c.gt.size(); ++i) {
      const double g = c.gt[i], p = c.pred[i];
      if (g <= 0) continue;
      ++n;
      mre += std::abs(p - g) / g;
      mae += std::abs(p - g);
      se += (p - g) * (p - g);
      sl += (std::log(p) - std::log(g)) * (std::log(p) - std::log(g));
      const double r = std::max(p / g, g / p);
      for (int k = 0; k < 3; ++k) d[k] += r < std::pow(1.25, k + 1) ? 1 : 0;
    }
    const auto m = depth_metrics(c.pred, c.gt);
    CHECK(m.valid == n);
    CHECK(m.mre == doctest::Approx(mre / n).epsilon(1e-6));
    CHECK(m.mae == doctest::Approx(mae / n).epsilon(1e-6));
    CHECK(m.rmse == doctest::Approx(std::sqrt(se / n)).epsilon(1e-6));
    CHECK(m.rmse_log == doctest::Approx(std::sqrt(sl / n)).epsilon(1e-6));
    CHECK(m.delta1 == doctest::Approx(d[0] / n).epsilon(1e-6));
    CHECK(m.delta2 == doctest::Approx(d[1] / n).epsilon(1e-6));
    CHECK(m.delta3 == doctest::Approx(d[2] / n).epsilon(1e-6));
  }
  const std::vector<float> zeros(4, 0.0f);
  CHECK_THROWS_AS(depth_metrics(zeros, zeros), MetricError);
}

TEST_CASE("depth metrics under joint scaling") {
  const auto c = random_depth(9, 100);
  const auto m = depth_metrics(c.pred, c.gt);
  std::vector<float> p2(c.pred), g2(c.gt);
  for (auto& v : p2) v *= 2.5f;
  for (auto& v : g2) v *= 2.5f;
  const auto s = depth_metrics(p2, g2);
  CHECK(s.mre == doctest::Approx(m.mre).epsilon(1e-6));
  CHECK(s.delta1 == m.delta1);
  CHECK(s.delta2 == m.delta2);
  CHECK(s.delta3 == m.delta3);
  CHECK(s.mae == doctest::Approx(2.5 * m.mae).epsilon(1e-6));
  CHECK(s.rmse == doctest::Approx(2.5 * m.rmse).epsilon(1e-6));
}

TEST_CASE("delta thresholds are strict and non-positive predictions fail them") {
  const std::vector<float> gt{1.0f, 1.0f}, pred{1.25f, -1.0f};
  const auto m = depth_metrics(pred, gt);
  CHECK(m.delta1 == 0.0);
  CHECK(m.delta2 == 0.5);
  CHECK(m.log_excluded == 1);
}

TEST_CASE("segmentation metrics match a confusion-matrix loop") {
  std::mt19937_64 rng(12);
  const int k = 4;
  std::vector<std::uint8_t> pred(300), gt(300);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    gt[i] = static_cast<std::uint8_t>(rng() % 3);  // class 3 absent from gt
    pred[i] = rng() % 4 == 0 ? static_cast<std::uint8_t>(rng() % k) : gt[i];
  }
  gt[7] = kIgnoreLabel;
  double iou = 0, acc = 0;
  for (int c = 0; c < 3; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == kIgnoreLabel) continue;
      tp += pred[i] == c && gt[i] == c;
      fp += pred[i] == c && gt[i] != c;
      fn += pred[i] != c && gt[i] == c;
    }
    iou += tp / (tp + fp + fn);
    acc += tp / (tp + fn);
  }
  const auto m = seg_metrics(pred, gt, k);
  CHECK(m.classes_present == 3);
  CHECK(m.miou == doctest::Approx(iou / 3).epsilon(1e-6));
  CHECK(m.macc == doctest::Approx(acc / 3).epsilon(1e-6));
  const auto perfect = seg_metrics(gt, gt, k);
  CHECK(perfect.miou == 1.0);
}

TEST_CASE("cuboid IoU closed forms") {
  const Cuboid unit{0, 1, 0, 1, 0, 1};
  CHECK(cuboid_3diou(unit, unit) == doctest::Approx(1.0));
  CHECK(cuboid_3diou(unit, Cuboid{2, 3, 0, 1, 0, 1}) == 0.0);
  CHECK(cuboid_3diou(unit, Cuboid{0.5, 1.5, 0, 1, 0, 1}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(cuboid_3diou(unit, Cuboid{0, 0, 0, 1, 0, 1}), MetricError);
}

TEST_CASE("cuboid fit recovers a room from its exact boundary") {
  // Camera at (1.2, 0.8) in a 3 x 2.5 room, 1.5 m high camera, 2.7 m ceiling.
  const double x0 = -1.2, x1 = 1.8, y0 = -0.8, y1 = 1.7, hc = 1.5, h = 2.7;
  const int w = 256;
  std::vector<double> boundary(w);
  for (int c = 0; c < w; ++c) {
    const double phi = 2 * std::numbers::pi * (c + 0.5) / w - std::numbers::pi;
    const double dx = std::cos(phi), dy = std::sin(phi);
    double t = INFINITY;
    if (dx > 0) t = std::min(t, x1 / dx);
    if (dx < 0) t = std::min(t, x0 / dx);
    if (dy > 0) t = std::min(t, y1 / dy);
    if (dy < 0) t = std::min(t, y0 / dy);
    boundary[c] = std::numbers::pi / 2 + std::atan(hc / t);
  }
  const auto box = fit_cuboid(boundary, hc, h);
  CHECK(box.x0 == doctest::Approx(x0).epsilon(1e-6));
  CHECK(box.x1 == doctest::Approx(x1).epsilon(1e-6));
  CHECK(box.y0 == doctest::Approx(y0).epsilon(1e-6));
  CHECK(box.y1 == doctest::Approx(y1).epsilon(1e-6));
  CHECK(box.z0 == doctest::Approx(-hc));
  CHECK(box.z1 == doctest::Approx(h - hc));
  CHECK(cuboid_3diou(box, Cuboid{x0, x1, y0, y1, -hc, h - hc}) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("metrics csv layout") {
  CHECK(metrics_csv_header() == "step,mre,mae,rmse,rmse_log,d1,d2,d3,miou,macc,iou3d");
  const auto row = metrics_csv_row(5, std::nullopt, std::nullopt, 0.5);
  CHECK(row == "5,,,,,,,,,,0.5");
}
