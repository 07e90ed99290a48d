#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mdl/ad/tensor.hpp"

namespace mdl::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update of `param` in place; `step` is 1-based.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamMoments& state, std::uint64_t step,
               const AdamConfig& cfg);

// Adam over a fixed parameter list. Parameters without a gradient this step
// are treated as having a zero gradient.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg);

  void step();
  void zero_grad();

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<AdamMoments>& moments() { return moments_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  void restore(std::uint64_t step, std::vector<AdamMoments> moments);

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig cfg_;
  std::vector<AdamMoments> moments_;
  std::uint64_t step_ = 0;
};

}  // namespace mdl::ad
