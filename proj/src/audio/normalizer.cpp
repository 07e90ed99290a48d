#include "mdl/audio/normalizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mdl/binary_io.hpp"
#include "mdl/error.hpp"

namespace mdl::audio {

Normalizer::Normalizer(std::vector<double> min, std::vector<double> max)
    : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) throw StructuralError("Normalizer: min/max length mismatch");
  for (std::size_t d = 0; d < min_.size(); ++d) {
    if (!(min_[d] <= max_[d])) throw InvariantError("Normalizer: min > max at dimension " + std::to_string(d));
  }
}

float Normalizer::apply(std::size_t d, double x) const {
  const double lo = min_[d], hi = max_[d];
  if (lo == hi) return 0.5f;
  const double v = 0.1 + 0.8 * (x - lo) / (hi - lo);
  return static_cast<float>(std::clamp(v, 0.1, 0.9));
}

void Normalizer::apply_inplace(std::span<float> frame) const {
  if (frame.size() != dim()) throw StructuralError("Normalizer: frame dimension mismatch");
  for (std::size_t d = 0; d < frame.size(); ++d) frame[d] = apply(d, frame[d]);
}

FeatureStream Normalizer::apply(const FeatureStream& s) const {
  if (s.values.cols() != dim()) throw StructuralError("Normalizer: stream dimension mismatch");
  FeatureStream out = s;
  for (std::size_t t = 0; t < out.frames(); ++t) apply_inplace(out.values.row(t));
  return out;
}

NormalizerFit::NormalizerFit(std::size_t dim)
    : min_(dim, std::numeric_limits<double>::infinity()), max_(dim, -std::numeric_limits<double>::infinity()) {}

void NormalizerFit::add(std::span<const float> frame) {
  if (frame.size() != min_.size()) throw StructuralError("NormalizerFit: frame dimension mismatch");
  for (std::size_t d = 0; d < frame.size(); ++d) {
    min_[d] = std::min<double>(min_[d], frame[d]);
    max_[d] = std::max<double>(max_[d], frame[d]);
  }
  ++count_;
}

void NormalizerFit::add(const FeatureStream& s) {
  for (std::size_t t = 0; t < s.frames(); ++t) add(s.values.row(t));
}

void NormalizerFit::merge(const NormalizerFit& other) {
  if (other.min_.size() != min_.size()) throw StructuralError("NormalizerFit: dimension mismatch");
  for (std::size_t d = 0; d < min_.size(); ++d) {
    min_[d] = std::min(min_[d], other.min_[d]);
    max_[d] = std::max(max_[d], other.max_[d]);
  }
  count_ += other.count_;
}

Normalizer NormalizerFit::finish() const {
  if (count_ == 0) throw InvariantError("fit_normalizer: no training frames");
  return Normalizer(min_, max_);
}

Normalizer fit_normalizer(std::span<const FeatureStream* const> songs) {
  NormalizerFit fit;
  for (const auto* s : songs) fit.add(*s);
  return fit.finish();
}

Normalizer fit_normalizer(const FeatureStream& frames) {
  NormalizerFit fit(frames.values.cols() == 0 ? kFeatureDim : frames.values.cols());
  fit.add(frames);
  return fit.finish();
}

std::vector<std::uint8_t> encode_normalizer(const Normalizer& n) {
  io::ByteWriter w;
  w.put_magic("MDLN");
  w.put(static_cast<std::uint32_t>(n.dim()));
  w.put_span<double>(n.min());
  w.put_span<double>(n.max());
  return w.release();
}

Normalizer decode_normalizer(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("MDLN");
  const auto dim = r.get<std::uint32_t>();
  std::vector<double> lo(dim), hi(dim);
  r.get_span<double>(lo);
  r.get_span<double>(hi);
  return Normalizer(std::move(lo), std::move(hi));
}

void save_normalizer(const std::filesystem::path& path, const Normalizer& n) {
  io::write_file(path, encode_normalizer(n));
}

Normalizer load_normalizer(const std::filesystem::path& path) {
  return io::decode_file(path, [](auto bytes) { return decode_normalizer(bytes); });
}

std::vector<std::uint8_t> encode_feature_file(const FeatureStream& s) {
  io::ByteWriter w;
  w.put_magic("MDLF");
  w.put(kFeatureFileVersion);
  w.put(static_cast<std::uint32_t>(s.frames()));
  w.put(static_cast<std::uint32_t>(kFeatureDim));
  w.put(kFrameRate);
  if (s.frames() > 0 && s.values.cols() != kFeatureDim) {
    throw StructuralError("feature file: frames must be 438-dimensional");
  }
  w.put_span<float>(s.values.data());
  return w.release();
}

FeatureStream decode_feature_file(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("MDLF");
  const std::size_t version_at = r.offset();
  if (r.get<std::uint32_t>() != kFeatureFileVersion) throw DecodeError("unsupported MDLF version", version_at);
  const auto count = r.get<std::uint32_t>();
  const std::size_t dim_at = r.offset();
  const auto dim = r.get<std::uint32_t>();
  if (dim != kFeatureDim) throw DecodeError("MDLF dimension must be 438", dim_at);
  const std::size_t rate_at = r.offset();
  if (r.get<double>() != kFrameRate) throw DecodeError("MDLF frame rate must be 60", rate_at);
  std::vector<float> data(static_cast<std::size_t>(count) * dim);
  r.get_span<float>(data);
  FeatureStream s;
  s.values = RowMatrix<float>(count, dim, std::move(data));
  return s;
}

void save_feature_file(const std::filesystem::path& path, const FeatureStream& s) {
  io::write_file(path, encode_feature_file(s));
}

FeatureStream load_feature_file(const std::filesystem::path& path) {
  return io::decode_file(path, [](auto bytes) { return decode_feature_file(bytes); });
}

}  // namespace mdl::audio
