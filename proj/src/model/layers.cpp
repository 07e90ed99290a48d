#include "mdl/model/layers.hpp"

#include <cmath>
#include <numbers>

namespace mdl::model {

template <typename T>
ad::Tensor<T> ParameterSet<T>::add(std::string name, ad::Shape shape, T fill) {
  for (const auto& [n, _] : params_) {
    if (n == name) throw StructuralError("duplicate parameter name: " + name);
  }
  ad::Tensor<T> t(std::move(shape), fill);
  t.set_requires_grad(true);
  params_.emplace_back(std::move(name), t);
  return t;
}

template <typename T>
std::vector<ad::Tensor<T>> ParameterSet<T>::tensors() const {
  std::vector<ad::Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& [_, t] : params_) out.push_back(t);
  return out;
}

template <typename T>
std::size_t ParameterSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

template <typename T>
ad::Tensor<T> ParameterSet<T>::find(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  return {};
}

template <typename T>
void init_uniform(ad::Tensor<T>& t, double bound, std::mt19937_64& rng) {
  for (auto& v : t.data()) v = static_cast<T>((2.0 * ad::uniform01(rng) - 1.0) * bound);
}

template <typename T>
void init_normal(ad::Tensor<T>& t, double stddev, std::mt19937_64& rng) {
  for (auto& v : t.data()) {
    // Box-Muller, one draw per pair of uniforms.
    const double u1 = 1.0 - ad::uniform01(rng);
    const double u2 = ad::uniform01(rng);
    v = static_cast<T>(stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2));
  }
}

template <typename T>
LinearLayer<T> LinearLayer<T>::create(ParameterSet<T>& ps, const std::string& name, std::size_t in,
                                      std::size_t out, bool bias, std::mt19937_64& rng) {
  LinearLayer<T> l;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  l.w = ps.add(name + ".w", {out, in});
  init_uniform(l.w, bound, rng);
  if (bias) {
    l.b = ps.add(name + ".b", {out});
    init_uniform(l.b, bound, rng);
  }
  return l;
}

template <typename T>
LayerNormLayer<T> LayerNormLayer<T>::create(ParameterSet<T>& ps, const std::string& name, std::size_t dim) {
  return {ps.add(name + ".gain", {dim}, T(1)), ps.add(name + ".bias", {dim}, T(0))};
}

template <typename T>
FeedForward<T> FeedForward<T>::create(ParameterSet<T>& ps, const std::string& name, std::size_t dim,
                                      std::size_t hidden, std::mt19937_64& rng) {
  FeedForward<T> f;
  f.up = LinearLayer<T>::create(ps, name + ".up", dim, hidden, true, rng);
  f.down = LinearLayer<T>::create(ps, name + ".down", hidden, dim, true, rng);
  return f;
}

template <typename T>
ad::Tensor<T> FeedForward<T>::operator()(const ad::Tensor<T>& x, double p, bool training,
                                         std::mt19937_64* rng) const {
  return down(ad::dropout(ad::relu(up(x)), p, training, rng));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template void init_uniform(ad::Tensor<float>&, double, std::mt19937_64&);
template void init_uniform(ad::Tensor<double>&, double, std::mt19937_64&);
template void init_normal(ad::Tensor<float>&, double, std::mt19937_64&);
template void init_normal(ad::Tensor<double>&, double, std::mt19937_64&);
template struct LinearLayer<float>;
template struct LinearLayer<double>;
template struct LayerNormLayer<float>;
template struct LayerNormLayer<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;

}  // namespace mdl::model
