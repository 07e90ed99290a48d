#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mdl/ad/tensor.hpp"

namespace mdl::model {

// Diagonal state-space parameters for one channel: dA/dt = a_n h_n + b_n x.
struct DiagonalSsm {
  std::vector<double> a;  // continuous eigenvalues, N
  std::vector<double> b;  // input projection, N
  std::vector<double> c;  // output projection, N
};

struct DiscreteSsm {
  std::vector<double> a_bar;  // exp(delta * a)
  std::vector<double> b_bar;  // (exp(delta * a) - 1) / a * b
  std::vector<double> c;
};

// expm1(x) / x, continuous through x = 0.
double expm1_ratio(double x);
// d/dx of expm1_ratio.
double expm1_ratio_derivative(double x);

// Zero-order-hold input gain for one state: (exp(delta*a) - 1)/a, equal to
// delta in the a -> 0 limit.
inline double zoh_gain(double delta, double a) { return delta * expm1_ratio(delta * a); }

// Per state: a_bar = exp(delta a), b_bar = (exp(delta a) - 1)/a * b.
std::pair<std::vector<double>, std::vector<double>> zoh_discretize(std::span<const double> a,
                                                                   std::span<const double> b, double delta);
DiscreteSsm discretize(const DiagonalSsm& ssm, double delta);

// h_t = a_bar h_{t-1} + b_bar x_t, y_t = c . h_t, h_{-1} = 0.
std::vector<double> scan_recurrent(const DiscreteSsm& ssm, std::span<const double> x);

// K_k = c . (a_bar^k b_bar), k = 0..length-1.
std::vector<double> ssm_kernel(const DiscreteSsm& ssm, std::size_t length);

// y_t = sum_{k<=t} K_k x_{t-k}.
std::vector<double> kernel_convolution(const DiscreteSsm& ssm, std::span<const double> x);

// Input-dependent (selective) scan over a batch.
//   u, delta: [B, L, E]; a: [E, N] (continuous, typically negative);
//   b, c: [B, L, N]; d_skip: [E] or undefined.
// Per channel e and state n:
//   h_t = exp(delta_t a) h_{t-1} + zoh_gain(delta_t, a) b_t u_t
//   y_t = sum_n c_t h_t + d_skip u_t
template <typename T>
ad::Tensor<T> selective_scan(const ad::Tensor<T>& u, const ad::Tensor<T>& delta, const ad::Tensor<T>& a,
                             const ad::Tensor<T>& b, const ad::Tensor<T>& c, const ad::Tensor<T>& d_skip);

}  // namespace mdl::model
