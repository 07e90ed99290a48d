#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mdl/audio/dsp.hpp"
#include "mdl/audio/wav.hpp"
#include "mdl/matrix.hpp"

namespace mdl::audio {

// Analysis parameters. 24 kHz with a 400-sample hop gives exactly 60 frames/s.
inline constexpr int kAnalysisRate = 24000;
inline constexpr int kFftSize = 2048;
inline constexpr int kHop = 400;
inline constexpr double kFrameRate = 60.0;
inline constexpr std::size_t kMelBands = 128;
inline constexpr double kLogFloor = 1e-10;

// Layout of one 438-dimensional feature frame.
namespace layout {
inline constexpr std::size_t kMfcc = 20;
inline constexpr std::size_t kMfccDelta = 20;
inline constexpr std::size_t kChroma = 12;
inline constexpr std::size_t kTempogram = 384;
inline constexpr std::size_t kOnset = 1;
inline constexpr std::size_t kBeat = 1;

inline constexpr std::size_t kMfccOffset = 0;
inline constexpr std::size_t kMfccDeltaOffset = kMfccOffset + kMfcc;
inline constexpr std::size_t kChromaOffset = kMfccDeltaOffset + kMfccDelta;
inline constexpr std::size_t kTempogramOffset = kChromaOffset + kChroma;
inline constexpr std::size_t kOnsetOffset = kTempogramOffset + kTempogram;
inline constexpr std::size_t kBeatOffset = kOnsetOffset + kOnset;
inline constexpr std::size_t kDim = kBeatOffset + kBeat;
static_assert(kDim == 438);
}  // namespace layout

inline constexpr std::size_t kFeatureDim = layout::kDim;

inline double frame_timestamp(std::size_t index) { return static_cast<double>(index) / kFrameRate; }

// Frames x 438, one row per 1/60 s.
struct FeatureStream {
  RowMatrix<float> values;

  std::size_t frames() const { return values.rows(); }
  double timestamp(std::size_t i) const { return frame_timestamp(i); }
};

// Per-feature streams computed from one spectrogram, before concatenation.
struct FeatureSet {
  RowMatrix<double> mfcc;        // frames x 20
  RowMatrix<double> mfcc_delta;  // frames x 20
  RowMatrix<double> chroma;      // frames x 12
  RowMatrix<double> tempogram;   // frames x 384
  std::vector<double> onset;     // frames
  std::vector<double> beat;      // frames, values in {0, 1}
};

// HTK-mel triangular filters over [0, sample_rate/2]; bands x (fft_size/2+1).
RowMatrix<double> mel_filterbank(std::size_t bands, int fft_size, int sample_rate);

// 10*log10 of mel-band power, floored at kLogFloor. frames x 128.
RowMatrix<double> log_mel(const MagnitudeSpectrogram& s);

// Orthonormal DCT-II of a vector, first `count` coefficients.
std::vector<double> dct2_ortho(std::span<const double> x, std::size_t count);

RowMatrix<double> mfcc(const MagnitudeSpectrogram& s);
RowMatrix<double> mfcc_from_log_mel(const RowMatrix<double>& log_mel_frames);

// Centered difference (c[t+1] - c[t-1]) / 2 with edge replication.
RowMatrix<double> mfcc_delta(const RowMatrix<double>& coeffs);

RowMatrix<double> chromagram(const MagnitudeSpectrogram& s);

// Mean over mel bands of the half-wave-rectified log-mel first difference.
std::vector<double> onset_strength(const MagnitudeSpectrogram& s);
std::vector<double> onset_strength_from_log_mel(const RowMatrix<double>& log_mel_frames);

// Local autocorrelation of the mean-removed, Hann-weighted onset envelope in a
// window centered on each frame (edge-replicated), normalized by lag 0.
RowMatrix<double> tempogram(std::span<const double> onset, std::size_t window = layout::kTempogram);

// 1 at local maxima of the onset envelope that exceed its running median.
std::vector<double> beat_flags(std::span<const double> onset);
inline constexpr std::size_t kBeatMedianRadius = 15;

FeatureSet compute_feature_set(const MagnitudeSpectrogram& s);

// Concatenates mfcc | delta | chroma | tempogram | onset | beat.
FeatureStream assemble_features(const FeatureSet& set);

// Full pipeline: resample to 24 kHz, STFT, every feature, assemble.
FeatureStream extract_features(const Waveform& w);

}  // namespace mdl::audio
