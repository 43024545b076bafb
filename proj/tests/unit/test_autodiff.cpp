#include <doctest.h>

#include <cmath>
#include <random>

#include "panelnet/ad/gradcheck.hpp"
#include "panelnet/ad/ops.hpp"
#include "panelnet/errors.hpp"

using namespace panelnet;
using ad::Tensor;
using D = Tensor<double>;

namespace {

D rand_tensor(std::mt19937_64& rng, ad::Shape s, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(ad::numel(s)));
  for (auto& x : v) x = u(rng);
  return D::from_vector(std::move(s), std::move(v));
}

}  // namespace

TEST_CASE("backward accumulates through shared subexpressions") {
  auto x = D::from_vector({2}, {1.5, -2.0}, true);
  auto y = ad::sum_all(ad::add(ad::mul(x, x), x));  // sum x^2 + x
  y.backward();
  CHECK(y.item() == doctest::Approx(2.25 + 4.0 + 1.5 - 2.0));
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
}

TEST_CASE("no-grad mode records nothing") {
  auto x = D::from_vector({1}, {2.0}, true);
  D y;
  {
    ad::NoGradGuard g;
    y = ad::mul(x, x);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(ad::grad_enabled());
}

TEST_CASE("shape checks") {
  auto a = D::zeros({2, 3});
  auto b = D::zeros({3, 2});
  CHECK_THROWS_AS(ad::add(a, b), ShapeError);
  CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
  CHECK_THROWS_AS(ad::reshape(a, {4}), ShapeError);
  CHECK_NOTHROW(ad::matmul(a, b));
}

TEST_CASE("matmul and bmm match loops") {
  std::mt19937_64 rng(1);
  const auto a = rand_tensor(rng, {2, 3, 4});
  const auto b = rand_tensor(rng, {2, 4, 5});
  const auto c = ad::bmm(a, b);
  for (int n = 0; n < 2; ++n) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 5; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k) s += a.data()[(n * 3 + i) * 4 + k] * b.data()[(n * 4 + k) * 5 + j];
        CHECK(c.data()[(n * 3 + i) * 5 + j] == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv2d matches a direct loop") {
  std::mt19937_64 rng(2);
  for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 1, 3}, {1, 0, 1}, {2, 0, 2}}) {
    const auto x = rand_tensor(rng, {2, 3, 7, 6});
    const auto w = rand_tensor(rng, {4, 3, k, k});
    const auto y = ad::conv2d(x, w, stride, pad);
    const int oh = (7 + 2 * pad - k) / stride + 1, ow = (6 + 2 * pad - k) / stride + 1;
    REQUIRE(y.shape() == ad::Shape{2, 4, oh, ow});
    for (int n = 0; n < 2; ++n) {
      for (int o = 0; o < 4; ++o) {
        for (int r = 0; r < oh; ++r) {
          for (int c = 0; c < ow; ++c) {
            double s = 0;
            for (int ci = 0; ci < 3; ++ci) {
              for (int i = 0; i < k; ++i) {
                for (int j = 0; j < k; ++j) {
                  const int rr = r * stride - pad + i, cc = c * stride - pad + j;
                  if (rr < 0 || rr >= 7 || cc < 0 || cc >= 6) continue;
                  s += x.data()[((n * 3 + ci) * 7 + rr) * 6 + cc] * w.data()[((o * 3 + ci) * k + i) * k + j];
                }
              }
            }
            CHECK(y.data()[((n * 4 + o) * oh + r) * ow + c] == doctest::Approx(s).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  std::mt19937_64 rng(3);
  const auto x = rand_tensor(rng, {3, 4, 5}, -30, 30);
  const auto y = ad::softmax(x, 1);
  const auto s = ad::sum(y, 1);
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  const auto y2 = ad::softmax(ad::add_scalar(x, 1000.0), 1);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y2.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-9));
}

TEST_CASE("layer norm output is standardised") {
  std::mt19937_64 rng(4);
  const auto x = rand_tensor(rng, {6, 16}, -3, 5);
  const auto y = ad::layer_norm(x, D::full({16}, 1.0), D::zeros({16}), 0.0);
  const auto m = ad::mean(y, 1);
  const auto v = ad::mean(ad::mul(y, y), 1);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(m.data()[i]) < 1e-12);
    CHECK(v.data()[i] == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("batch norm updates running statistics with momentum") {
  auto x = D::from_vector({2, 1, 1, 2}, {1, 2, 3, 6});
  auto rm = D::zeros({1});
  auto rv = D::full({1}, 1.0);
  const auto y = ad::batch_norm(x, D::full({1}, 1.0), D::zeros({1}), rm, rv, true, 0.1, 0.0);
  // Batch mean 3, biased variance 3.5, unbiased 14/3.
  CHECK(rm.data()[0] == doctest::Approx(0.3));
  CHECK(rv.data()[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  CHECK(y.data()[0] == doctest::Approx(-2.0 / std::sqrt(3.5)));
  const auto z = ad::batch_norm(x, D::full({1}, 2.0), D::full({1}, 1.0), rm, rv, false, 0.1, 0.0);
  CHECK(z.data()[3] == doctest::Approx(2.0 * (6 - 0.3) / std::sqrt(rv.data()[0]) + 1.0));
}

TEST_CASE("permute, concat and slice move elements as indexed") {
  const auto x = D::from_vector({2, 3}, {0, 1, 2, 3, 4, 5});
  const auto t = ad::permute(x, {1, 0});
  CHECK(std::vector<double>(t.data().begin(), t.data().end()) == std::vector<double>{0, 3, 1, 4, 2, 5});
  const auto c = ad::concat<double>({x, x}, 1);
  CHECK(c.shape() == ad::Shape{2, 6});
  CHECK(c.data()[9] == 3.0);
  const auto s = ad::slice(x, 1, 1, 2);
  CHECK(std::vector<double>(s.data().begin(), s.data().end()) == std::vector<double>{1, 2, 4, 5});
}

TEST_CASE("upsample repeats each pixel in a 2x2 block") {
  const auto x = D::from_vector({1, 1, 1, 2}, {1, 2});
  const auto y = ad::upsample_nearest2x(x);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});
}

TEST_CASE("gradient checker flags a wrong backward") {
  // relu with a deliberately broken backward pass.
  const ad::ScalarFn bad = [](const std::vector<D>& in) {
    const auto& x = in[0];
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v * v;
    auto y = ad::make_op<double>("bad_square", x.shape(), out, {x}, [node = x.node()](ad::Node<double>& self) {
      double* g = ad::grad_target(node);
      if (!g) return;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * node->value[i];  // missing 2x
    });
    return ad::sum_all(y);
  };
  const auto rep = ad::gradient_check(bad, {D::from_vector({3}, {0.5, -1.0, 2.0})});
  CHECK_FALSE(rep.passed);
  const ad::ScalarFn good = [](const std::vector<D>& in) { return ad::sum_all(ad::mul(in[0], in[0])); };
  CHECK(ad::gradient_check(good, {D::from_vector({3}, {0.5, -1.0, 2.0})}).passed);
}

TEST_CASE("float and double graphs agree") {
  std::mt19937_64 rng(5);
  const auto xd = rand_tensor(rng, {2, 3, 4, 4});
  const auto wd = rand_tensor(rng, {2, 3, 3, 3});
  std::vector<float> xf(xd.data().begin(), xd.data().end()), wf(wd.data().begin(), wd.data().end());
  const auto yd = ad::gelu(ad::conv2d(xd, wd, 1, 1));
  const auto yf = ad::gelu(ad::conv2d(Tensor<float>::from_vector(xd.shape(), xf),
                                      Tensor<float>::from_vector(wd.shape(), wf), 1, 1));
  for (std::size_t i = 0; i < yd.numel(); ++i) CHECK(yf.data()[i] == doctest::Approx(yd.data()[i]).epsilon(1e-5));
}
