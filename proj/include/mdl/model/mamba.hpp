#pragma once

#include <cstdint>
#include <vector>

#include "mdl/model/sequence_model.hpp"

namespace mdl::model {

// Stack of selective state-space blocks over the fused audio + pose stream.
// Each block: norm -> gated selective SSM -> residual, then norm -> MLP -> residual.
template <typename T>
class Mamba final : public SequenceModel<T> {
 public:
  Mamba(const ModelConfig& config, std::uint64_t seed);

  ad::Tensor<T> forward(const ModelInput<T>& in, bool training, std::mt19937_64* rng) const override;

 private:
  struct Block {
    LayerNormLayer<T> ln_mix, ln_ff;
    LinearLayer<T> in_proj;    // D -> 2E, no bias
    ad::Tensor<T> conv_kernel; // [E, W]
    ad::Tensor<T> conv_bias;   // [E]
    LinearLayer<T> x_proj;     // E -> R + 2N, no bias
    LinearLayer<T> dt_proj;    // R -> E
    ad::Tensor<T> a_log;       // [E, N]
    ad::Tensor<T> d_skip;      // [E]
    LinearLayer<T> out_proj;   // E -> D, no bias
    FeedForward<T> ff;
  };

  ad::Tensor<T> mix(const Block& b, const ad::Tensor<T>& x) const;

  LinearLayer<T> audio_embed_, pose_embed_;
  std::vector<Block> blocks_;
  LayerNormLayer<T> final_norm_;
  LinearLayer<T> head_;
};

}  // namespace mdl::model
