#include "panelnet/nn/layers.hpp"

#include "panelnet/errors.hpp"

namespace panelnet::nn {

template <typename T>
void ParameterStore<T>::check_unique(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) throw ConfigError("duplicate parameter name " + name);
  }
  for (const auto& p : buffers_) {
    if (p.name == name) throw ConfigError("duplicate parameter name " + name);
  }
}

template <typename T>
Tensor<T> ParameterStore<T>::parameter(const std::string& name, Shape shape, Init init) {
  check_unique(name);
  std::vector<T> values(static_cast<std::size_t>(ad::numel(shape)));
  if (init.kind == Init::Kind::kNormal) {
    std::normal_distribution<double> dist(0.0, init.value);
    for (auto& v : values) v = static_cast<T>(dist(rng_));
  } else {
    std::fill(values.begin(), values.end(), static_cast<T>(init.value));
  }
  auto t = Tensor<T>::from_vector(std::move(shape), std::move(values), true);
  params_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParameterStore<T>::buffer(const std::string& name, Shape shape, T fill) {
  check_unique(name);
  auto t = Tensor<T>::full(std::move(shape), fill, false);
  buffers_.push_back({name, t});
  return t;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
Conv2d<T>::Conv2d(ParameterStore<T>& ps, const std::string& name, int in, int out, int kernel,
                  int stride_, int padding_, bool with_bias, Init weight_init)
    : stride(stride_), padding(padding_) {
  weight = ps.parameter(name + ".weight", {out, in, kernel, kernel}, weight_init);
  if (with_bias) bias = ps.parameter(name + ".bias", {out}, Init::zeros());
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  auto y = ad::conv2d(x, weight, stride, padding);
  return bias.defined() ? ad::bias_add(y, bias, 1) : y;
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParameterStore<T>& ps, const std::string& name, int channels) {
  gamma = ps.parameter(name + ".weight", {channels}, Init::ones());
  beta = ps.parameter(name + ".bias", {channels}, Init::zeros());
  running_mean = ps.buffer(name + ".running_mean", {channels}, T(0));
  running_var = ps.buffer(name + ".running_var", {channels}, T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::operator()(const Tensor<T>& x, bool training) {
  return ad::batch_norm(x, gamma, beta, running_mean, running_var, training, momentum);
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& ps, const std::string& name, int in, int out,
                  Init weight_init) {
  weight = ps.parameter(name + ".weight", {in, out}, weight_init);
  bias = ps.parameter(name + ".bias", {out}, Init::zeros());
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  const auto in = weight.dim(0), out = weight.dim(1);
  if (x.ndim() < 1 || x.dim(-1) != in) {
    throw ShapeError("linear: input " + ad::to_string(x.shape()) + " vs weight " +
                     ad::to_string(weight.shape()));
  }
  const auto rows = static_cast<std::int64_t>(x.numel()) / in;
  auto y = ad::bias_add(ad::matmul(ad::reshape(x, {rows, in}), weight), bias, 1);
  Shape s = x.shape();
  s.back() = out;
  return ad::reshape(y, s);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& ps, const std::string& name, int dim) {
  gamma = ps.parameter(name + ".weight", {dim}, Init::ones());
  beta = ps.parameter(name + ".bias", {dim}, Init::zeros());
}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ad::layer_norm(x, gamma, beta);
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;

}  // namespace panelnet::nn
