#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "panelnet/checkpoint.hpp"
#include "panelnet/nn/layers.hpp"

namespace panelnet {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update at step t (1-based) for a flat tensor.
// Moments are accumulated in double precision arithmetic, stored as T.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t t, const AdamConfig& cfg);

template <typename T>
class Adam {
 public:
  Adam(std::vector<nn::Parameter<T>>& params, const AdamConfig& cfg);

  // Applies the update to every parameter. Parameters without a gradient see
  // a zero gradient. Non-finite gradients throw NumericError naming the tensor
  // before anything is modified.
  void step();

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  void save(Checkpoint& ck) const;
  // VersionError on missing or mis-shaped moment entries.
  void load(const Checkpoint& ck);

 private:
  std::vector<nn::Parameter<T>>* params_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace panelnet
