#include "mdl/ad/optim.hpp"

#include <cmath>

namespace mdl::ad {

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamMoments& state, std::uint64_t step,
               const AdamConfig& cfg) {
  if (step == 0) throw InvariantError("adam_step: step is 1-based");
  if (state.m.size() != param.size()) state.m.assign(param.size(), 0.0);
  if (state.v.size() != param.size()) state.v.assign(param.size(), 0.0);
  if (!grad.empty() && grad.size() != param.size()) throw StructuralError("adam_step: gradient shape mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg), moments_(params_.size()) {}

template <typename T>
void Adam<T>::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    adam_step<T>(p.data(), p.grad(), moments_[i], step_, cfg_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Adam<T>::restore(std::uint64_t step, std::vector<AdamMoments> moments) {
  if (moments.size() != params_.size()) throw StructuralError("Adam::restore: parameter count mismatch");
  for (std::size_t i = 0; i < moments.size(); ++i) {
    if (moments[i].m.size() != params_[i].numel() || moments[i].v.size() != params_[i].numel()) {
      throw StructuralError("Adam::restore: moment shape mismatch");
    }
  }
  step_ = step;
  moments_ = std::move(moments);
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamMoments&, std::uint64_t,
                               const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamMoments&, std::uint64_t,
                                const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace mdl::ad
