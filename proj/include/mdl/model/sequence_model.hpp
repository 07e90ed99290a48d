#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "mdl/ad/tensor.hpp"
#include "mdl/model/config.hpp"
#include "mdl/model/layers.hpp"

namespace mdl::model {

// One batch of windows. Slots at or beyond valid_len[b] are right padding.
template <typename T>
struct ModelInput {
  ad::Tensor<T> audio;                       // [B, K, feature_dim]
  ad::Tensor<T> shifted_poses;               // [B, K, pose_dim], slot 0 is the zero start token
  std::vector<std::size_t> valid_len;        // B
  std::vector<std::size_t> audio_positions;  // B*K absolute song positions
  std::vector<std::size_t> pose_positions;   // B*K, 0 = start token

  std::size_t batch() const { return valid_len.size(); }
};

// Audio window + right-shifted pose window -> K predicted poses in [-pi, pi].
template <typename T>
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  // Returns [B, K, pose_dim]. `rng` drives dropout and is only needed when training.
  virtual ad::Tensor<T> forward(const ModelInput<T>& in, bool training, std::mt19937_64* rng) const = 0;

  const ModelConfig& config() const { return config_; }
  const ParameterSet<T>& parameters() const { return params_; }

  // Copies values by name; every parameter must be present with a matching shape.
  template <typename U>
  void load_values(const ParameterSet<U>& source);

 protected:
  explicit SequenceModel(ModelConfig config) : config_(std::move(config)) {}

  // Shared output head: pi * tanh(W x + b).
  ad::Tensor<T> pose_head(const ad::Tensor<T>& x, const LinearLayer<T>& head) const;

  ModelConfig config_;
  ParameterSet<T> params_;
};

template <typename T>
std::unique_ptr<SequenceModel<T>> make_model(const ModelConfig& config, std::uint64_t seed);

template <typename T>
template <typename U>
void SequenceModel<T>::load_values(const ParameterSet<U>& source) {
  if (source.named().size() != params_.named().size()) {
    throw StructuralError("load_values: parameter count mismatch");
  }
  for (const auto& [name, dst] : params_.named()) {
    const auto src = source.find(name);
    if (!src.defined()) throw StructuralError("load_values: missing parameter " + name);
    if (src.shape() != dst.shape()) throw StructuralError("load_values: shape mismatch for " + name);
    ad::Tensor<T> handle = dst;
    auto out = handle.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src.data()[i]);
  }
}

}  // namespace mdl::model
