#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "mdl/ad/ops.hpp"
#include "mdl/ad/tensor.hpp"

namespace mdl::testing {

using ad::Tensor;

inline Tensor<double> random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = lo + (hi - lo) * ad::uniform01(rng);
  return t;
}

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// gradients that are zero in exact arithmetic from turning rounding noise
// into a large relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-2) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "leaf i, element j"
};

// Compares reverse-mode gradients of the scalar f() against central
// differences for every leaf. With `max_per_leaf` set, that many elements of
// each larger leaf are sampled instead of checking all of them.
template <typename F>
GradCheck gradient_check(std::vector<Tensor<double>> leaves, F&& f, std::mt19937_64& rng,
                         std::size_t max_per_leaf = std::numeric_limits<std::size_t>::max(), double h = 1e-6) {
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  {
    const Tensor<double> loss = f();
    ad::backward(loss);
  }
  GradCheck result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    const std::vector<double> analytic = leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                                          : std::vector<double>(leaf.numel(), 0.0);
    std::vector<std::size_t> idx;
    if (leaf.numel() <= max_per_leaf) {
      for (std::size_t i = 0; i < leaf.numel(); ++i) idx.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_per_leaf; ++i) {
        idx.push_back(std::min(leaf.numel() - 1, static_cast<std::size_t>(ad::uniform01(rng) * leaf.numel())));
      }
    }
    ad::NoGradGuard no_grad;
    for (auto i : idx) {
      const double x0 = leaf[i];
      leaf[i] = x0 + h;
      const double fp = f().item();
      leaf[i] = x0 - h;
      const double fm = f().item();
      leaf[i] = x0;
      const double err = relative_error(analytic[i], (fp - fm) / (2.0 * h));
      ++result.checked;
      if (err > result.max_error) {
        result.max_error = err;
        result.worst = "leaf " + std::to_string(li) + ", element " + std::to_string(i);
      }
    }
  }
  for (auto& l : leaves) l.zero_grad();
  return result;
}

// Reduces a tensor to a scalar with fixed random weights so every output
// element gets a distinct upstream gradient.
inline Tensor<double> weighted_sum(const Tensor<double>& y, const Tensor<double>& weights) {
  return ad::sum(ad::mul(y, weights));
}

}  // namespace mdl::testing
