#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mdl/ad/tensor.hpp"
#include "mdl/model/layers.hpp"

namespace mdl::model {

// Binary attention mask: 1 = may attend, 0 = blocked. Realized additively as
// 0 / -inf on the attention logits.
struct AttentionMask {
  ad::Shape shape;                   // [K] (padding) or [K, K] (causal)
  std::vector<std::uint8_t> allowed;

  bool operator==(const AttentionMask&) const = default;
};

// Positions < valid_len are attendable.
AttentionMask make_padding_mask(std::size_t valid_len, std::size_t window);
// Entry (i, j) is attendable iff j <= i.
AttentionMask make_causal_mask(std::size_t window);

// Additive [B, 1, 1, K] key mask from per-row valid lengths.
template <typename T>
ad::Tensor<T> padding_bias(const std::vector<std::size_t>& valid_len, std::size_t window);
// Additive [B, 1, K, K]: causal and key padding combined.
template <typename T>
ad::Tensor<T> causal_padding_bias(const std::vector<std::size_t>& valid_len, std::size_t window);
template <typename T>
ad::Tensor<T> to_additive(const AttentionMask& m);

// softmax((Q K^T + M) / sqrt(D)) V for q [..., Kq, D], k/v [..., Kk, D];
// `mask` is additive and broadcastable to [..., Kq, Kk] (may be undefined).
// Throws StructuralError when a query row has no attendable key.
template <typename T>
ad::Tensor<T> attention(const ad::Tensor<T>& q, const ad::Tensor<T>& k, const ad::Tensor<T>& v,
                        const ad::Tensor<T>& mask, double attn_dropout = 0.0, bool training = false,
                        std::mt19937_64* rng = nullptr);

// Multi-head attention with input projections and an output projection over
// the concatenated heads.
template <typename T>
struct MultiHeadAttention {
  LinearLayer<T> wq, wk, wv, wo;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterSet<T>& ps, const std::string& name, std::size_t dim,
                                   std::size_t heads, std::mt19937_64& rng);
  // query [B, Kq, dim], context [B, Kk, dim] -> [B, Kq, dim]
  ad::Tensor<T> operator()(const ad::Tensor<T>& query, const ad::Tensor<T>& context, const ad::Tensor<T>& mask,
                           double p, bool training, std::mt19937_64* rng) const;
};

}  // namespace mdl::model
