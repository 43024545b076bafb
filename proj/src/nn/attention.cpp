#include "panelnet/nn/attention.hpp"

#include <cmath>

#include "panelnet/errors.hpp"

namespace panelnet::nn {

template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       int heads) {
  if (q.ndim() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention: q " + ad::to_string(q.shape()) + ", k " +
                     ad::to_string(k.shape()) + ", v " + ad::to_string(v.shape()));
  }
  const auto b = q.dim(0), n = q.dim(1), d = q.dim(2);
  if (heads <= 0 || d % heads != 0) {
    throw ConfigError("attention: dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const auto dh = d / heads;
  auto split = [&](const Tensor<T>& t, std::vector<int> perm, Shape out) {
    return ad::reshape(ad::permute(ad::reshape(t, {b, n, heads, dh}), perm), std::move(out));
  };
  auto qh = split(q, {0, 2, 1, 3}, {b * heads, n, dh});
  auto kt = split(k, {0, 2, 3, 1}, {b * heads, dh, n});
  auto vh = split(v, {0, 2, 1, 3}, {b * heads, n, dh});
  auto scores = ad::scale(ad::bmm(qh, kt), static_cast<T>(1.0 / std::sqrt(double(dh))));
  auto attn = ad::softmax(scores, -1);
  auto ctx = ad::reshape(ad::bmm(attn, vh), {b, heads, n, dh});
  return ad::reshape(ad::permute(ctx, {0, 2, 1, 3}), {b, n, d});
}

template <typename T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(ParameterStore<T>& ps, const std::string& name,
                                                  int dim, int heads_, bool zero_init_out)
    : heads(heads_) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError(name + ": dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const auto init = Init::normal(0.02);
  query = Linear<T>(ps, name + ".query", dim, dim, init);
  key = Linear<T>(ps, name + ".key", dim, dim, init);
  value = Linear<T>(ps, name + ".value", dim, dim, init);
  out = Linear<T>(ps, name + ".out", dim, dim, zero_init_out ? Init::zeros() : init);
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::operator()(const Tensor<T>& x) const {
  return out(scaled_dot_product_attention(query(x), key(x), value(x), heads));
}

template <typename T>
TransformerBlock<T>::TransformerBlock(ParameterStore<T>& ps, const std::string& name, int dim,
                                      int heads, int mlp_ratio, bool zero_init_residual) {
  norm1 = LayerNorm<T>(ps, name + ".norm1", dim);
  attn = MultiHeadSelfAttention<T>(ps, name + ".attn", dim, heads, zero_init_residual);
  norm2 = LayerNorm<T>(ps, name + ".norm2", dim);
  fc1 = Linear<T>(ps, name + ".mlp.fc1", dim, mlp_ratio * dim, Init::normal(0.02));
  fc2 = Linear<T>(ps, name + ".mlp.fc2", mlp_ratio * dim, dim,
                  zero_init_residual ? Init::zeros() : Init::normal(0.02));
}

template <typename T>
Tensor<T> TransformerBlock<T>::operator()(const Tensor<T>& x) const {
  auto h = ad::add(attn(norm1(x)), x);
  return ad::add(fc2(ad::gelu(fc1(norm2(h)))), h);
}

template Tensor<float> scaled_dot_product_attention(const Tensor<float>&, const Tensor<float>&,
                                                    const Tensor<float>&, int);
template Tensor<double> scaled_dot_product_attention(const Tensor<double>&, const Tensor<double>&,
                                                     const Tensor<double>&, int);
template struct MultiHeadSelfAttention<float>;
template struct MultiHeadSelfAttention<double>;
template struct TransformerBlock<float>;
template struct TransformerBlock<double>;

}  // namespace panelnet::nn
