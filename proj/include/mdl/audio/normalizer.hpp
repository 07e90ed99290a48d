#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mdl/audio/features.hpp"

namespace mdl::audio {

inline constexpr float kNormLow = 0.1f;
inline constexpr float kNormHigh = 0.9f;

// Per-dimension min/max fitted on training songs; maps into [0.1, 0.9].
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::vector<double> min, std::vector<double> max);

  std::size_t dim() const { return min_.size(); }
  const std::vector<double>& min() const { return min_; }
  const std::vector<double>& max() const { return max_; }
  bool fitted() const { return !min_.empty(); }

  // 0.1 + 0.8 (x - min) / (max - min), clamped; constant dimensions map to 0.5.
  float apply(std::size_t d, double x) const;
  void apply_inplace(std::span<float> frame) const;
  FeatureStream apply(const FeatureStream& s) const;

  bool operator==(const Normalizer&) const = default;

 private:
  std::vector<double> min_;
  std::vector<double> max_;
};

// Streaming min/max reduction; partial fits merge associatively.
class NormalizerFit {
 public:
  explicit NormalizerFit(std::size_t dim = kFeatureDim);
  void add(std::span<const float> frame);
  void add(const FeatureStream& s);
  void merge(const NormalizerFit& other);
  std::size_t count() const { return count_; }
  Normalizer finish() const;

 private:
  std::vector<double> min_;
  std::vector<double> max_;
  std::size_t count_ = 0;
};

Normalizer fit_normalizer(std::span<const FeatureStream* const> training_songs);
Normalizer fit_normalizer(const FeatureStream& training_frames);

// MDLN: magic, u32 dim, dim f64 mins, dim f64 maxs.
std::vector<std::uint8_t> encode_normalizer(const Normalizer& n);
Normalizer decode_normalizer(std::span<const std::uint8_t> bytes);
void save_normalizer(const std::filesystem::path& path, const Normalizer& n);
Normalizer load_normalizer(const std::filesystem::path& path);

// MDLF: magic, u32 version, u32 frame_count, u32 dim, f64 frame_rate,
// then frame_count x dim f32 row-major.
inline constexpr std::uint32_t kFeatureFileVersion = 1;
std::vector<std::uint8_t> encode_feature_file(const FeatureStream& s);
FeatureStream decode_feature_file(std::span<const std::uint8_t> bytes);
void save_feature_file(const std::filesystem::path& path, const FeatureStream& s);
FeatureStream load_feature_file(const std::filesystem::path& path);

}  // namespace mdl::audio
