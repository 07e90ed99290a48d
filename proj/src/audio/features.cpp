#include "mdl/audio/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mdl/error.hpp"

namespace mdl::audio {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double log_power(double power) { return 10.0 * std::log10(std::max(power, kLogFloor)); }

// Chroma only looks at C1..C9; lower bins are too coarse to resolve pitch.
constexpr double kChromaMinHz = 32.703;
constexpr double kChromaMaxHz = 8372.0;

}  // namespace

RowMatrix<double> mel_filterbank(std::size_t bands, int fft_size, int sample_rate) {
  const std::size_t bins = static_cast<std::size_t>(fft_size) / 2 + 1;
  RowMatrix<double> fb(bands, bins, 0.0);
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(bands + 1));
  }
  for (std::size_t b = 0; b < bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb(b, k) = w;
    }
  }
  return fb;
}

RowMatrix<double> log_mel(const MagnitudeSpectrogram& s) {
  const auto fb = mel_filterbank(kMelBands, s.fft_size, s.sample_rate);
  RowMatrix<double> out(s.frames(), kMelBands);
  for (std::size_t t = 0; t < s.frames(); ++t) {
    const auto mag = s.mag.row(t);
    for (std::size_t b = 0; b < kMelBands; ++b) {
      const auto w = fb.row(b);
      double e = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) e += w[k] * mag[k] * mag[k];
      out(t, b) = log_power(e);
    }
  }
  return out;
}

std::vector<double> dct2_ortho(std::span<const double> x, std::size_t count) {
  const std::size_t n = x.size();
  std::vector<double> c(count, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                             (2.0 * static_cast<double>(n)));
    }
    c[k] = acc * (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
  }
  return c;
}

RowMatrix<double> mfcc_from_log_mel(const RowMatrix<double>& lm) {
  RowMatrix<double> out(lm.rows(), layout::kMfcc);
  for (std::size_t t = 0; t < lm.rows(); ++t) {
    const auto c = dct2_ortho(lm.row(t), layout::kMfcc);
    std::copy(c.begin(), c.end(), out.row(t).begin());
  }
  return out;
}

RowMatrix<double> mfcc(const MagnitudeSpectrogram& s) { return mfcc_from_log_mel(log_mel(s)); }

RowMatrix<double> mfcc_delta(const RowMatrix<double>& c) {
  RowMatrix<double> d(c.rows(), c.cols(), 0.0);
  const std::size_t n = c.rows();
  if (n < 2) return d;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t prev = t == 0 ? 0 : t - 1;
    const std::size_t next = t + 1 == n ? n - 1 : t + 1;
    for (std::size_t j = 0; j < c.cols(); ++j) d(t, j) = (c(next, j) - c(prev, j)) / 2.0;
  }
  return d;
}

RowMatrix<double> chromagram(const MagnitudeSpectrogram& s) {
  const std::size_t bins = s.num_bins();
  std::vector<int> pitch_class(bins, -1);
  std::vector<double> weight(bins, 0.0);
  for (std::size_t k = 1; k < bins; ++k) {
    const double f = s.bin_frequency(k);
    if (f < kChromaMinHz || f > kChromaMaxHz) continue;
    const double midi = 12.0 * std::log2(f / 440.0) + 69.0;
    const double nearest = std::round(midi);
    pitch_class[k] = static_cast<int>(((static_cast<long long>(nearest) % 12) + 12) % 12);
    weight[k] = std::max(0.0, 1.0 - 2.0 * std::abs(midi - nearest));
  }

  RowMatrix<double> out(s.frames(), layout::kChroma, 0.0);
  for (std::size_t t = 0; t < s.frames(); ++t) {
    const auto mag = s.mag.row(t);
    auto row = out.row(t);
    for (std::size_t k = 0; k < bins; ++k) {
      if (pitch_class[k] < 0) continue;
      row[static_cast<std::size_t>(pitch_class[k])] += weight[k] * mag[k] * mag[k];
    }
    const double peak = *std::max_element(row.begin(), row.end());
    if (peak > 0.0) {
      for (auto& v : row) v /= peak;
    }
  }
  return out;
}

std::vector<double> onset_strength_from_log_mel(const RowMatrix<double>& lm) {
  std::vector<double> onset(lm.rows(), 0.0);
  for (std::size_t t = 1; t < lm.rows(); ++t) {
    double acc = 0.0;
    for (std::size_t b = 0; b < lm.cols(); ++b) acc += std::max(0.0, lm(t, b) - lm(t - 1, b));
    onset[t] = acc / static_cast<double>(lm.cols());
  }
  return onset;
}

std::vector<double> onset_strength(const MagnitudeSpectrogram& s) {
  return onset_strength_from_log_mel(log_mel(s));
}

RowMatrix<double> tempogram(std::span<const double> onset, std::size_t window) {
  const std::size_t n = onset.size();
  RowMatrix<double> out(n, window, 0.0);
  if (n == 0 || window == 0) return out;

  const auto hann = hann_window(window);
  const long long half = static_cast<long long>(window / 2);
  std::vector<double> seg(window);
  for (std::size_t t = 0; t < n; ++t) {
    double mean = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < window; ++j) {
      const long long idx = std::clamp<long long>(static_cast<long long>(t) - half + static_cast<long long>(j), 0,
                                                  static_cast<long long>(n) - 1);
      seg[j] = onset[static_cast<std::size_t>(idx)];
      mean += seg[j];
      scale = std::max(scale, std::abs(seg[j]));
    }
    mean /= static_cast<double>(window);
    double spread = 0.0;
    for (std::size_t j = 0; j < window; ++j) {
      seg[j] = (seg[j] - mean) * hann[j];
      spread = std::max(spread, std::abs(seg[j]));
    }
    // Mean removal of a flat segment leaves only rounding noise.
    if (spread <= 1e-12 * std::max(1.0, scale)) continue;

    auto row = out.row(t);
    for (std::size_t lag = 0; lag < window; ++lag) {
      double acc = 0.0;
      for (std::size_t j = 0; j + lag < window; ++j) acc += seg[j] * seg[j + lag];
      row[lag] = acc;
    }
    const double zero_lag = row[0];
    for (auto& v : row) v /= zero_lag;
  }
  return out;
}

std::vector<double> beat_flags(std::span<const double> onset) {
  const std::size_t n = onset.size();
  std::vector<double> flags(n, 0.0);
  std::vector<double> buf;
  for (std::size_t t = 0; t < n; ++t) {
    const double v = onset[t];
    if (t > 0 && !(v > onset[t - 1])) continue;
    if (t + 1 < n && !(v >= onset[t + 1])) continue;
    const std::size_t lo = t >= kBeatMedianRadius ? t - kBeatMedianRadius : 0;
    const std::size_t hi = std::min(n, t + kBeatMedianRadius + 1);
    buf.assign(onset.begin() + static_cast<std::ptrdiff_t>(lo), onset.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    if (v > *mid) flags[t] = 1.0;
  }
  return flags;
}

FeatureSet compute_feature_set(const MagnitudeSpectrogram& s) {
  FeatureSet set;
  const auto lm = log_mel(s);
  set.mfcc = mfcc_from_log_mel(lm);
  set.mfcc_delta = mfcc_delta(set.mfcc);
  set.chroma = chromagram(s);
  set.onset = onset_strength_from_log_mel(lm);
  set.tempogram = tempogram(set.onset);
  set.beat = beat_flags(set.onset);
  return set;
}

FeatureStream assemble_features(const FeatureSet& set) {
  const std::size_t n = set.mfcc.rows();
  if (set.mfcc_delta.rows() != n || set.chroma.rows() != n || set.tempogram.rows() != n ||
      set.onset.size() != n || set.beat.size() != n) {
    throw StructuralError("assemble_features: feature streams have different frame counts");
  }
  if (set.mfcc.cols() != layout::kMfcc || set.mfcc_delta.cols() != layout::kMfccDelta ||
      set.chroma.cols() != layout::kChroma || set.tempogram.cols() != layout::kTempogram) {
    throw StructuralError("assemble_features: feature stream has the wrong width");
  }
  FeatureStream out;
  out.values = RowMatrix<float>(n, layout::kDim);
  for (std::size_t t = 0; t < n; ++t) {
    auto row = out.values.row(t);
    auto put = [&](std::size_t offset, std::span<const double> src) {
      for (std::size_t j = 0; j < src.size(); ++j) row[offset + j] = static_cast<float>(src[j]);
    };
    put(layout::kMfccOffset, set.mfcc.row(t));
    put(layout::kMfccDeltaOffset, set.mfcc_delta.row(t));
    put(layout::kChromaOffset, set.chroma.row(t));
    put(layout::kTempogramOffset, set.tempogram.row(t));
    row[layout::kOnsetOffset] = static_cast<float>(set.onset[t]);
    row[layout::kBeatOffset] = static_cast<float>(set.beat[t]);
  }
  return out;
}

FeatureStream extract_features(const Waveform& w) {
  const Waveform r = resample(w, kAnalysisRate);
  return assemble_features(compute_feature_set(magnitude(stft(r, kFftSize, kHop))));
}

}  // namespace mdl::audio
