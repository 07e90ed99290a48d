#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mdl/ad/tensor.hpp"

namespace mdl::ad {

// Elementwise arithmetic with numpy-style broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

// Batched product over the last two axes. Leading axes of `b` must equal
// those of `a`, or `b` must be a plain matrix shared across the batch.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// x [..., in] * W[out, in]^T + bias[out]; bias may be undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> transpose_last(const Tensor<T>& a);
// Columns [start, start+len) of the last axis.
template <typename T> Tensor<T> slice_last(const Tensor<T>& a, std::size_t start, std::size_t len);

// Softmax along `axis`. Rows that are entirely -inf produce zeros; their count
// is written to `fully_masked_rows` when provided.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis = -1, std::size_t* fully_masked_rows = nullptr);

// Normalizes over the last axis; gain/bias have the last axis' extent.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> softplus(const Tensor<T>& x);

// Rows of `table` [vocab, dim] gathered into shape index_shape + [dim].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::size_t> indices, Shape index_shape);

// Inverted dropout: scales survivors by 1/(1-p) when training; identity otherwise.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, std::mt19937_64* rng);

// Depthwise causal convolution. x [B, L, C], kernel [C, W], bias [C] (optional).
// y[b,t,c] = bias[c] + sum_j kernel[c,j] * x[b, t-(W-1)+j, c] with zero left padding.
template <typename T>
Tensor<T> conv1d_causal(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);

// Reductions to a one-element tensor, accumulated in double.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// Uniform double in [0, 1) from 53 random bits; portable across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace mdl::ad
