#pragma once

#include <string>

#include "panelnet/nn/layers.hpp"

namespace panelnet::nn {

// Per head: softmax(q k^T / sqrt(d_head)) v, heads concatenated.
// q, k, v: [B, tokens, dim]; dim must be divisible by heads (ConfigError otherwise).
template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       int heads);

template <typename T>
struct MultiHeadSelfAttention {
  Linear<T> query, key, value, out;
  int heads = 1;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterStore<T>& ps, const std::string& name, int dim, int heads,
                         bool zero_init_out);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// Pre-LN block: z' = MSA(LN(z)) + z;  z'' = FFN(LN(z')) + z'.
// FFN is Linear(dim, ratio*dim) -> gelu -> Linear(ratio*dim, dim).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> norm1;
  MultiHeadSelfAttention<T> attn;
  LayerNorm<T> norm2;
  Linear<T> fc1, fc2;

  TransformerBlock() = default;
  TransformerBlock(ParameterStore<T>& ps, const std::string& name, int dim, int heads,
                   int mlp_ratio, bool zero_init_residual);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

}  // namespace panelnet::nn
