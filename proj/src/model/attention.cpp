#include "mdl/model/attention.hpp"

#include <cmath>
#include <limits>

#include "mdl/ad/ops.hpp"

namespace mdl::model {

AttentionMask make_padding_mask(std::size_t valid_len, std::size_t window) {
  if (valid_len == 0) throw InvariantError("padding mask: encoder needs at least one valid token");
  if (valid_len > window) throw InvariantError("padding mask: valid length exceeds window");
  AttentionMask m{{window}, std::vector<std::uint8_t>(window, 0)};
  for (std::size_t i = 0; i < valid_len; ++i) m.allowed[i] = 1;
  return m;
}

AttentionMask make_causal_mask(std::size_t window) {
  if (window == 0) throw InvariantError("causal mask: window must be positive");
  AttentionMask m{{window, window}, std::vector<std::uint8_t>(window * window, 0)};
  for (std::size_t i = 0; i < window; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.allowed[i * window + j] = 1;
  }
  return m;
}

template <typename T>
ad::Tensor<T> to_additive(const AttentionMask& m) {
  ad::Tensor<T> t(m.shape);
  for (std::size_t i = 0; i < m.allowed.size(); ++i) {
    t[i] = m.allowed[i] ? T(0) : -std::numeric_limits<T>::infinity();
  }
  return t;
}

template <typename T>
ad::Tensor<T> padding_bias(const std::vector<std::size_t>& valid_len, std::size_t window) {
  ad::Tensor<T> t({valid_len.size(), 1, 1, window});
  for (std::size_t b = 0; b < valid_len.size(); ++b) {
    const auto m = make_padding_mask(valid_len[b], window);
    for (std::size_t j = 0; j < window; ++j) {
      t[b * window + j] = m.allowed[j] ? T(0) : -std::numeric_limits<T>::infinity();
    }
  }
  return t;
}

template <typename T>
ad::Tensor<T> causal_padding_bias(const std::vector<std::size_t>& valid_len, std::size_t window) {
  const auto causal = make_causal_mask(window);
  ad::Tensor<T> t({valid_len.size(), 1, window, window});
  for (std::size_t b = 0; b < valid_len.size(); ++b) {
    const auto pad = make_padding_mask(valid_len[b], window);
    for (std::size_t i = 0; i < window; ++i) {
      for (std::size_t j = 0; j < window; ++j) {
        const bool ok = causal.allowed[i * window + j] && pad.allowed[j];
        t[(b * window + i) * window + j] = ok ? T(0) : -std::numeric_limits<T>::infinity();
      }
    }
  }
  return t;
}

template <typename T>
ad::Tensor<T> attention(const ad::Tensor<T>& q, const ad::Tensor<T>& k, const ad::Tensor<T>& v,
                        const ad::Tensor<T>& mask, double attn_dropout, bool training, std::mt19937_64* rng) {
  const std::size_t d = q.dim(-1);
  auto scores = ad::matmul(q, ad::transpose_last(k));
  if (mask.defined()) scores = ad::add(scores, mask);
  scores = ad::scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
  std::size_t blocked = 0;
  auto weights = ad::softmax(scores, -1, &blocked);
  if (blocked > 0) throw StructuralError("attention: a query row has no attendable key");
  weights = ad::dropout(weights, attn_dropout, training, rng);
  return ad::matmul(weights, v);
}

template <typename T>
MultiHeadAttention<T> MultiHeadAttention<T>::create(ParameterSet<T>& ps, const std::string& name, std::size_t dim,
                                                    std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || dim % heads != 0) throw InvariantError("attention: dim must be divisible by heads");
  MultiHeadAttention<T> m;
  m.wq = LinearLayer<T>::create(ps, name + ".q", dim, dim, true, rng);
  m.wk = LinearLayer<T>::create(ps, name + ".k", dim, dim, true, rng);
  m.wv = LinearLayer<T>::create(ps, name + ".v", dim, dim, true, rng);
  m.wo = LinearLayer<T>::create(ps, name + ".o", dim, dim, true, rng);
  m.heads = heads;
  return m;
}

template <typename T>
ad::Tensor<T> MultiHeadAttention<T>::operator()(const ad::Tensor<T>& query, const ad::Tensor<T>& context,
                                                const ad::Tensor<T>& mask, double p, bool training,
                                                std::mt19937_64* rng) const {
  const std::size_t nb = query.dim(0), kq = query.dim(1), kk = context.dim(1), dim = query.dim(2);
  const std::size_t dh = dim / heads;
  auto split = [&](const ad::Tensor<T>& x, std::size_t len) {
    return ad::permute(ad::reshape(x, {nb, len, heads, dh}), {0, 2, 1, 3});
  };
  const auto q = split(wq(query), kq);
  const auto k = split(wk(context), kk);
  const auto v = split(wv(context), kk);
  const auto heads_out = attention(q, k, v, mask, p, training, rng);  // [B, H, Kq, dh]
  const auto merged = ad::reshape(ad::permute(heads_out, {0, 2, 1, 3}), {nb, kq, dim});
  return wo(merged);
}

template ad::Tensor<float> to_additive<float>(const AttentionMask&);
template ad::Tensor<double> to_additive<double>(const AttentionMask&);
template ad::Tensor<float> padding_bias<float>(const std::vector<std::size_t>&, std::size_t);
template ad::Tensor<double> padding_bias<double>(const std::vector<std::size_t>&, std::size_t);
template ad::Tensor<float> causal_padding_bias<float>(const std::vector<std::size_t>&, std::size_t);
template ad::Tensor<double> causal_padding_bias<double>(const std::vector<std::size_t>&, std::size_t);
template ad::Tensor<float> attention(const ad::Tensor<float>&, const ad::Tensor<float>&, const ad::Tensor<float>&,
                                     const ad::Tensor<float>&, double, bool, std::mt19937_64*);
template ad::Tensor<double> attention(const ad::Tensor<double>&, const ad::Tensor<double>&,
                                      const ad::Tensor<double>&, const ad::Tensor<double>&, double, bool,
                                      std::mt19937_64*);
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;

}  // namespace mdl::model
