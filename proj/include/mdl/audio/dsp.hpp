#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "mdl/audio/wav.hpp"
#include "mdl/matrix.hpp"

namespace mdl::audio {

// Linear-interpolation resampling. Output length is
// round(len * target_rate / sample_rate); identity when the rates agree.
Waveform resample(const Waveform& w, int target_rate);

// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::vector<std::complex<double>>& x);

// Periodic Hann window of the given length.
std::vector<double> hann_window(std::size_t n);

struct Spectrogram {
  RowMatrix<std::complex<double>> bins;  // frames x (fft_size/2 + 1)
  int sample_rate = 0;
  int fft_size = 0;
  int hop = 0;

  std::size_t frames() const { return bins.rows(); }
  std::size_t num_bins() const { return bins.cols(); }
  double bin_frequency(std::size_t k) const {
    return static_cast<double>(k) * sample_rate / fft_size;
  }
};

struct MagnitudeSpectrogram {
  RowMatrix<double> mag;  // frames x (fft_size/2 + 1)
  int sample_rate = 0;
  int fft_size = 0;

  std::size_t frames() const { return mag.rows(); }
  std::size_t num_bins() const { return mag.cols(); }
  double bin_frequency(std::size_t k) const {
    return static_cast<double>(k) * sample_rate / fft_size;
  }
};

// Hann-windowed STFT with centered (reflect-padded) frames; frame t is
// centered on sample t*hop, giving ceil(len/hop) frames.
Spectrogram stft(const Waveform& w, int fft_size, int hop);

MagnitudeSpectrogram magnitude(const Spectrogram& s);

}  // namespace mdl::audio
