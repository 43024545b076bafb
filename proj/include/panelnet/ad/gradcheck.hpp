#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "panelnet/ad/tensor.hpp"

namespace panelnet::ad {

struct GradCheckOptions {
  double eps = 1e-4;
  double tol = 1e-3;
  // Denominator floor for the relative error, so gradients that are zero up
  // to finite-difference noise do not blow the ratio up.
  double floor = 1e-5;
  // 0 checks every element; otherwise a seeded random subset per input.
  std::size_t max_elements_per_input = 0;
  std::uint64_t seed = 0;
  // Elements for which this returns true are skipped (e.g. points sitting on
  // a kink of a piecewise function).
  std::function<bool(std::size_t input, std::size_t index)> skip;
  // Also differences with eps/2 and drops elements where the two estimates
  // disagree, i.e. where a kink lies within the step. The check fails if more
  // than max_kink_fraction of the elements are dropped.
  bool kink_guard = false;
  double max_kink_fraction = 0.05;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::string worst;  // "input i[j]: analytic a vs numeric n"
};

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares reverse-mode gradients of a scalar function with central
// differences. Inputs are marked requires_grad and perturbed in place.
// Throws NumericError on non-finite values.
GradCheckReport gradient_check(const ScalarFn& f, std::vector<Tensor<double>> inputs,
                               const GradCheckOptions& opts = {});

}  // namespace panelnet::ad
