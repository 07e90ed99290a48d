#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

namespace mdl::model {

enum class Variant { kTransformer, kMamba };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

inline constexpr std::size_t kPoseDim = 4;

// Architecture hyperparameters shared by both variants; fields that only one
// variant uses are ignored by the other.
struct ModelConfig {
  Variant variant = Variant::kTransformer;
  std::size_t layers = 6;
  std::size_t embed_dim = 128;
  std::size_t heads = 8;          // transformer
  std::size_t ff_dim = 2048;
  double dropout = 0.1;
  std::size_t window = 20;
  std::size_t position_vocab = 0;  // transformer: longest song length + 1
  std::size_t state_size = 16;     // mamba
  std::size_t expand = 2;          // mamba
  std::size_t conv_width = 4;      // mamba
  std::size_t feature_dim = 438;
  std::size_t pose_dim = kPoseDim;

  // Transformer sizes: 6 layers, 8 heads, 128-dim, 2048 feed-forward, K = 20.
  static ModelConfig transformer_default(std::size_t position_vocab);
  // Mamba sizes: 6 blocks, 128-dim, 2048 feed-forward, K = 120, N = 16.
  static ModelConfig mamba_default();

  std::size_t inner_dim() const { return expand * embed_dim; }
  std::size_t dt_rank() const { return (embed_dim + 15) / 16; }

  // Throws InvariantError on inconsistent values.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace mdl::model
