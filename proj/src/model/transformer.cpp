#include "mdl/model/transformer.hpp"

#include <algorithm>
#include <numbers>

#include "mdl/ad/ops.hpp"

namespace mdl::model {

template <typename T>
ad::Tensor<T> SequenceModel<T>::pose_head(const ad::Tensor<T>& x, const LinearLayer<T>& head) const {
  return ad::scale(ad::tanh(head(x)), static_cast<T>(std::numbers::pi));
}

template <typename T>
Transformer<T>::Transformer(const ModelConfig& config, std::uint64_t seed) : SequenceModel<T>(config) {
  config.validate();
  if (config.variant != Variant::kTransformer) throw InvariantError("Transformer: config variant is not transformer");
  std::mt19937_64 rng(seed);
  auto& ps = this->params_;
  const std::size_t d = config.embed_dim;
  audio_embed_ = LinearLayer<T>::create(ps, "audio_embed", config.feature_dim, d, true, rng);
  pose_embed_ = LinearLayer<T>::create(ps, "pose_embed", config.pose_dim, d, true, rng);
  position_table_ = ps.add("position_table", {config.position_vocab, d});
  init_normal(position_table_, 0.02, rng);
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    EncoderBlock b;
    b.ln_attn = LayerNormLayer<T>::create(ps, p + ".ln_attn", d);
    b.self_attn = MultiHeadAttention<T>::create(ps, p + ".self_attn", d, config.heads, rng);
    b.ln_ff = LayerNormLayer<T>::create(ps, p + ".ln_ff", d);
    b.ff = FeedForward<T>::create(ps, p + ".ff", d, config.ff_dim, rng);
    encoder_.push_back(std::move(b));
  }
  encoder_norm_ = LayerNormLayer<T>::create(ps, "encoder.ln_final", d);
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    DecoderBlock b;
    b.ln_self = LayerNormLayer<T>::create(ps, p + ".ln_self", d);
    b.self_attn = MultiHeadAttention<T>::create(ps, p + ".self_attn", d, config.heads, rng);
    b.ln_cross = LayerNormLayer<T>::create(ps, p + ".ln_cross", d);
    b.cross_attn = MultiHeadAttention<T>::create(ps, p + ".cross_attn", d, config.heads, rng);
    b.ln_ff = LayerNormLayer<T>::create(ps, p + ".ln_ff", d);
    b.ff = FeedForward<T>::create(ps, p + ".ff", d, config.ff_dim, rng);
    decoder_.push_back(std::move(b));
  }
  decoder_norm_ = LayerNormLayer<T>::create(ps, "decoder.ln_final", d);
  head_ = LinearLayer<T>::create(ps, "head", d, config.pose_dim, true, rng);
}

template <typename T>
ad::Tensor<T> Transformer<T>::positions(const std::vector<std::size_t>& idx, std::size_t batch,
                                        std::size_t window) const {
  if (idx.size() != batch * window) throw StructuralError("Transformer: position index count mismatch");
  // Positions past the table (songs longer than any training song) clamp to the last entry.
  std::vector<std::size_t> clamped(idx.size());
  const std::size_t last = this->config_.position_vocab - 1;
  std::transform(idx.begin(), idx.end(), clamped.begin(), [last](std::size_t i) { return std::min(i, last); });
  return ad::embedding_lookup(position_table_, std::span<const std::size_t>(clamped), {batch, window});
}

template <typename T>
ad::Tensor<T> Transformer<T>::encode(const ModelInput<T>& in, bool training, std::mt19937_64* rng) const {
  const auto& cfg = this->config_;
  const std::size_t nb = in.batch(), k = in.audio.dim(1);
  if (in.audio.rank() != 3 || in.audio.dim(0) != nb || in.audio.dim(2) != cfg.feature_dim) {
    throw StructuralError("Transformer: audio must be [B, K, " + std::to_string(cfg.feature_dim) + "]");
  }
  const auto mask = padding_bias<T>(in.valid_len, k);
  auto x = ad::add(audio_embed_(in.audio), positions(in.audio_positions, nb, k));
  x = ad::dropout(x, cfg.dropout, training, rng);
  for (const auto& b : encoder_) {
    const auto h = b.ln_attn(x);
    x = ad::add(x, ad::dropout(b.self_attn(h, h, mask, cfg.dropout, training, rng), cfg.dropout, training, rng));
    x = ad::add(x, ad::dropout(b.ff(b.ln_ff(x), cfg.dropout, training, rng), cfg.dropout, training, rng));
  }
  return encoder_norm_(x);
}

template <typename T>
ad::Tensor<T> Transformer<T>::decode(const ModelInput<T>& in, const ad::Tensor<T>& memory, bool training,
                                     std::mt19937_64* rng) const {
  const auto& cfg = this->config_;
  const std::size_t nb = in.batch(), k = in.shifted_poses.dim(1);
  if (in.shifted_poses.rank() != 3 || in.shifted_poses.dim(0) != nb || in.shifted_poses.dim(2) != cfg.pose_dim) {
    throw StructuralError("Transformer: shifted poses must be [B, K, pose_dim]");
  }
  const auto self_mask = causal_padding_bias<T>(in.valid_len, k);
  // Cross-attention hides padded encoder slots as well.
  const auto memory_mask = padding_bias<T>(in.valid_len, memory.dim(1));
  auto x = ad::add(pose_embed_(in.shifted_poses), positions(in.pose_positions, nb, k));
  x = ad::dropout(x, cfg.dropout, training, rng);
  for (const auto& b : decoder_) {
    const auto h = b.ln_self(x);
    x = ad::add(x, ad::dropout(b.self_attn(h, h, self_mask, cfg.dropout, training, rng), cfg.dropout, training, rng));
    const auto hc = b.ln_cross(x);
    x = ad::add(x, ad::dropout(b.cross_attn(hc, memory, memory_mask, cfg.dropout, training, rng), cfg.dropout,
                               training, rng));
    x = ad::add(x, ad::dropout(b.ff(b.ln_ff(x), cfg.dropout, training, rng), cfg.dropout, training, rng));
  }
  return this->pose_head(decoder_norm_(x), head_);
}

template <typename T>
ad::Tensor<T> Transformer<T>::forward(const ModelInput<T>& in, bool training, std::mt19937_64* rng) const {
  return decode(in, encode(in, training, rng), training, rng);
}

template class SequenceModel<float>;
template class SequenceModel<double>;
template class Transformer<float>;
template class Transformer<double>;

}  // namespace mdl::model
