#include "mdl/model/mamba.hpp"

#include <cmath>

#include "mdl/ad/ops.hpp"
#include "mdl/model/ssm.hpp"
#include "mdl/model/transformer.hpp"

namespace mdl::model {

namespace {

constexpr double kDtMin = 0.001;
constexpr double kDtMax = 0.1;

// softplus^-1(y) = y + log(1 - exp(-y))
double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

}  // namespace

template <typename T>
Mamba<T>::Mamba(const ModelConfig& config, std::uint64_t seed) : SequenceModel<T>(config) {
  config.validate();
  if (config.variant != Variant::kMamba) throw InvariantError("Mamba: config variant is not mamba");
  std::mt19937_64 rng(seed);
  auto& ps = this->params_;
  const std::size_t d = config.embed_dim, e = config.inner_dim(), n = config.state_size, r = config.dt_rank();
  const std::size_t w = config.conv_width;
  audio_embed_ = LinearLayer<T>::create(ps, "audio_embed", config.feature_dim, d, true, rng);
  pose_embed_ = LinearLayer<T>::create(ps, "pose_embed", config.pose_dim, d, true, rng);
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string p = "block." + std::to_string(i);
    Block b;
    b.ln_mix = LayerNormLayer<T>::create(ps, p + ".ln_mix", d);
    b.in_proj = LinearLayer<T>::create(ps, p + ".in_proj", d, 2 * e, false, rng);
    b.conv_kernel = ps.add(p + ".conv.w", {e, w});
    init_uniform(b.conv_kernel, 1.0 / std::sqrt(static_cast<double>(w)), rng);
    b.conv_bias = ps.add(p + ".conv.b", {e});
    init_uniform(b.conv_bias, 1.0 / std::sqrt(static_cast<double>(w)), rng);
    b.x_proj = LinearLayer<T>::create(ps, p + ".x_proj", e, r + 2 * n, false, rng);
    b.dt_proj = LinearLayer<T>::create(ps, p + ".dt_proj", r, e, true, rng);
    auto dt_bias = b.dt_proj.b.data();
    for (auto& v : dt_bias) {
      const double dt = std::exp(std::log(kDtMin) + ad::uniform01(rng) * (std::log(kDtMax) - std::log(kDtMin)));
      v = static_cast<T>(inverse_softplus(dt));
    }
    b.a_log = ps.add(p + ".a_log", {e, n});
    auto a = b.a_log.data();
    for (std::size_t ch = 0; ch < e; ++ch) {
      for (std::size_t s = 0; s < n; ++s) a[ch * n + s] = static_cast<T>(std::log(static_cast<double>(s + 1)));
    }
    b.d_skip = ps.add(p + ".d_skip", {e}, T(1));
    b.out_proj = LinearLayer<T>::create(ps, p + ".out_proj", e, d, false, rng);
    b.ln_ff = LayerNormLayer<T>::create(ps, p + ".ln_ff", d);
    b.ff = FeedForward<T>::create(ps, p + ".ff", d, config.ff_dim, rng);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = LayerNormLayer<T>::create(ps, "ln_final", d);
  head_ = LinearLayer<T>::create(ps, "head", d, config.pose_dim, true, rng);
}

template <typename T>
ad::Tensor<T> Mamba<T>::mix(const Block& b, const ad::Tensor<T>& x) const {
  const auto& cfg = this->config_;
  const std::size_t e = cfg.inner_dim(), n = cfg.state_size, r = cfg.dt_rank();
  const auto xz = b.in_proj(x);
  auto xs = ad::slice_last(xz, 0, e);
  const auto z = ad::slice_last(xz, e, e);
  xs = ad::silu(ad::conv1d_causal(xs, b.conv_kernel, b.conv_bias));
  const auto proj = b.x_proj(xs);
  const auto delta = ad::softplus(b.dt_proj(ad::slice_last(proj, 0, r)));
  const auto bm = ad::slice_last(proj, r, n);
  const auto cm = ad::slice_last(proj, r + n, n);
  const auto a = ad::scale(ad::exp(b.a_log), T(-1));
  const auto y = selective_scan(xs, delta, a, bm, cm, b.d_skip);
  return b.out_proj(ad::mul(y, ad::silu(z)));
}

template <typename T>
ad::Tensor<T> Mamba<T>::forward(const ModelInput<T>& in, bool training, std::mt19937_64* rng) const {
  const auto& cfg = this->config_;
  const std::size_t nb = in.batch();
  if (in.audio.rank() != 3 || in.audio.dim(0) != nb || in.audio.dim(2) != cfg.feature_dim) {
    throw StructuralError("Mamba: audio must be [B, K, " + std::to_string(cfg.feature_dim) + "]");
  }
  if (in.shifted_poses.rank() != 3 || in.shifted_poses.dim(0) != nb || in.shifted_poses.dim(1) != in.audio.dim(1) ||
      in.shifted_poses.dim(2) != cfg.pose_dim) {
    throw StructuralError("Mamba: shifted poses must be [B, K, pose_dim]");
  }
  auto x = ad::add(audio_embed_(in.audio), pose_embed_(in.shifted_poses));
  x = ad::dropout(x, cfg.dropout, training, rng);
  for (const auto& b : blocks_) {
    x = ad::add(x, ad::dropout(mix(b, b.ln_mix(x)), cfg.dropout, training, rng));
    x = ad::add(x, ad::dropout(b.ff(b.ln_ff(x), cfg.dropout, training, rng), cfg.dropout, training, rng));
  }
  return this->pose_head(final_norm_(x), head_);
}

template <typename T>
std::unique_ptr<SequenceModel<T>> make_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.variant == Variant::kMamba) return std::make_unique<Mamba<T>>(config, seed);
  return std::make_unique<Transformer<T>>(config, seed);
}

template class Mamba<float>;
template class Mamba<double>;
template std::unique_ptr<SequenceModel<float>> make_model<float>(const ModelConfig&, std::uint64_t);
template std::unique_ptr<SequenceModel<double>> make_model<double>(const ModelConfig&, std::uint64_t);

}  // namespace mdl::model
