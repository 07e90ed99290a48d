#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mdl/ad/ops.hpp"
#include "mdl/ad/tensor.hpp"

namespace mdl::model {

// Ordered, named collection of trainable tensors.
template <typename T>
class ParameterSet {
 public:
  ad::Tensor<T> add(std::string name, ad::Shape shape, T fill = T(0));

  const std::vector<std::pair<std::string, ad::Tensor<T>>>& named() const { return params_; }
  std::vector<ad::Tensor<T>> tensors() const;
  std::size_t element_count() const;
  // Returns an undefined tensor when absent.
  ad::Tensor<T> find(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, ad::Tensor<T>>> params_;
};

// Deterministic initializers built on uniform01 so results do not depend on
// the standard library's distribution implementations.
template <typename T>
void init_uniform(ad::Tensor<T>& t, double bound, std::mt19937_64& rng);
template <typename T>
void init_normal(ad::Tensor<T>& t, double stddev, std::mt19937_64& rng);

template <typename T>
struct LinearLayer {
  ad::Tensor<T> w;  // [out, in]
  ad::Tensor<T> b;  // [out], may be undefined

  // Uniform(+-1/sqrt(in)) weights and bias.
  static LinearLayer create(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                            bool bias, std::mt19937_64& rng);
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return ad::linear(x, w, b); }
};

template <typename T>
struct LayerNormLayer {
  ad::Tensor<T> gain;
  ad::Tensor<T> bias;

  static LayerNormLayer create(ParameterSet<T>& ps, const std::string& name, std::size_t dim);
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return ad::layer_norm(x, gain, bias); }
};

// Two-layer ReLU MLP: dim -> hidden -> dim.
template <typename T>
struct FeedForward {
  LinearLayer<T> up;
  LinearLayer<T> down;

  static FeedForward create(ParameterSet<T>& ps, const std::string& name, std::size_t dim, std::size_t hidden,
                            std::mt19937_64& rng);
  ad::Tensor<T> operator()(const ad::Tensor<T>& x, double p, bool training, std::mt19937_64* rng) const;
};

}  // namespace mdl::model
