#include "panelnet/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "panelnet/errors.hpp"

namespace panelnet::ad {

namespace {

double eval_scalar(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  NoGradGuard guard;
  const double v = f(inputs).item();
  if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckReport gradient_check(const ScalarFn& f, std::vector<Tensor<double>> inputs,
                               const GradCheckOptions& opts) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor<double> out = f(inputs);
  if (out.numel() != 1) {
    throw ShapeError("gradient_check: function must be scalar, got " + to_string(out.shape()));
  }
  if (!std::isfinite(out.item())) throw NumericError("gradient_check: non-finite function value");
  out.backward();

  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    analytic[k].assign(inputs[k].numel(), 0.0);
    if (inputs[k].has_grad()) {
      auto g = inputs[k].grad();
      std::copy(g.begin(), g.end(), analytic[k].begin());
    }
    for (double v : analytic[k]) {
      if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite analytic gradient");
    }
  }

  GradCheckReport rep;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> idx(inputs[k].numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (opts.max_elements_per_input && idx.size() > opts.max_elements_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_elements_per_input);
      std::sort(idx.begin(), idx.end());
    }
    auto values = inputs[k].mutable_data();
    for (std::size_t i : idx) {
      if (opts.skip && opts.skip(k, i)) continue;
      const double orig = values[i];
      values[i] = orig + opts.eps;
      const double fp = eval_scalar(f, inputs);
      values[i] = orig - opts.eps;
      const double fm = eval_scalar(f, inputs);
      values[i] = orig;
      double numeric = (fp - fm) / (2.0 * opts.eps);
      if (opts.kink_guard) {
        const double h = opts.eps / 2;
        values[i] = orig + h;
        const double hp = eval_scalar(f, inputs);
        values[i] = orig - h;
        const double hm = eval_scalar(f, inputs);
        values[i] = orig;
        const double half = (hp - hm) / (2.0 * h);
        // Two step sizes disagree only where f is not smooth within the step.
        if (std::abs(half - numeric) > 0.1 * opts.tol * std::max({std::abs(half), std::abs(numeric), opts.floor})) {
          ++rep.skipped_kinks;
          continue;
        }
        numeric = half;
      }
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++rep.checked;
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      if (rel > rep.max_rel_error || rep.worst.empty()) {
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        std::ostringstream os;
        os << "input " << k << "[" << i << "]: analytic " << a << " vs numeric " << numeric;
        rep.worst = os.str();
      }
    }
  }
  rep.passed = rep.max_rel_error < opts.tol &&
               static_cast<double>(rep.skipped_kinks) <= opts.max_kink_fraction * static_cast<double>(rep.checked + rep.skipped_kinks);
  return rep;
}

}  // namespace panelnet::ad
