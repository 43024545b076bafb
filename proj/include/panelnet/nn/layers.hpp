#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "panelnet/ad/ops.hpp"
#include "panelnet/ad/tensor.hpp"

namespace panelnet::nn {

using ad::Shape;
using ad::Tensor;

// A named trainable tensor. Names are dotted module paths
// (encoder.stage1.block0.conv1.weight) and are unique within a model.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

struct Init {
  enum class Kind { kConstant, kNormal } kind = Kind::kConstant;
  double value = 0.0;  // constant, or the normal's standard deviation

  static Init zeros() { return {Kind::kConstant, 0.0}; }
  static Init ones() { return {Kind::kConstant, 1.0}; }
  static Init normal(double stddev) { return {Kind::kNormal, stddev}; }
};

template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> parameter(const std::string& name, Shape shape, Init init);
  // Non-trainable state (batch-norm running statistics).
  Tensor<T> buffer(const std::string& name, Shape shape, T fill);

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<Parameter<T>>& buffers() { return buffers_; }
  const std::vector<Parameter<T>>& buffers() const { return buffers_; }

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  void check_unique(const std::string& name) const;

  std::mt19937_64 rng_;
  std::vector<Parameter<T>> params_;
  std::vector<Parameter<T>> buffers_;
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out] or undefined
  int stride = 1;
  int padding = 0;

  Conv2d() = default;
  Conv2d(ParameterStore<T>& ps, const std::string& name, int in, int out, int kernel, int stride,
         int padding, bool with_bias, Init weight_init);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma, beta, running_mean, running_var;
  double momentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore<T>& ps, const std::string& name, int channels);
  Tensor<T> operator()(const Tensor<T>& x, bool training);
};

// y = x W + b over the last axis; W is [in, out].
template <typename T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(ParameterStore<T>& ps, const std::string& name, int in, int out, Init weight_init);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& ps, const std::string& name, int dim);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// He-normal standard deviation for a fan-in.
inline double he_std(int fan_in) { return std::sqrt(2.0 / fan_in); }

}  // namespace panelnet::nn
