#pragma once

#include <cstdint>
#include <vector>

#include "mdl/model/attention.hpp"
#include "mdl/model/sequence_model.hpp"

namespace mdl::model {

// Encoder over the audio window, decoder over the right-shifted pose window.
// Pre-norm residual blocks, one learned position table shared by both stacks.
template <typename T>
class Transformer final : public SequenceModel<T> {
 public:
  Transformer(const ModelConfig& config, std::uint64_t seed);

  ad::Tensor<T> forward(const ModelInput<T>& in, bool training, std::mt19937_64* rng) const override;

  // Encoder only: [B, K, dim] memory.
  ad::Tensor<T> encode(const ModelInput<T>& in, bool training, std::mt19937_64* rng) const;
  // Decoder + head given encoder memory: [B, K, pose_dim].
  ad::Tensor<T> decode(const ModelInput<T>& in, const ad::Tensor<T>& memory, bool training,
                       std::mt19937_64* rng) const;

  const LinearLayer<T>& head() const { return head_; }

 private:
  struct EncoderBlock {
    LayerNormLayer<T> ln_attn, ln_ff;
    MultiHeadAttention<T> self_attn;
    FeedForward<T> ff;
  };
  struct DecoderBlock {
    LayerNormLayer<T> ln_self, ln_cross, ln_ff;
    MultiHeadAttention<T> self_attn, cross_attn;
    FeedForward<T> ff;
  };

  ad::Tensor<T> positions(const std::vector<std::size_t>& idx, std::size_t batch, std::size_t window) const;

  LinearLayer<T> audio_embed_, pose_embed_;
  ad::Tensor<T> position_table_;
  std::vector<EncoderBlock> encoder_;
  std::vector<DecoderBlock> decoder_;
  LayerNormLayer<T> encoder_norm_, decoder_norm_;
  LinearLayer<T> head_;
};

}  // namespace mdl::model
