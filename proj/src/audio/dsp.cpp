#include "mdl/audio/dsp.hpp"

#include <cmath>
#include <numbers>

#include "mdl/error.hpp"

namespace mdl::audio {

namespace {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Mirror index into [0, n) without repeating the edge sample, as numpy's
// "reflect" padding does; folds repeatedly for pads longer than the signal.
std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n) - 2;
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long long>(n) ? m : period - m);
}

}  // namespace

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw InvariantError("resample: target rate must be positive");
  if (w.sample_rate <= 0) throw InvariantError("resample: source rate must be positive");
  if (target_rate == w.sample_rate || w.samples.empty()) {
    Waveform out = w;
    out.sample_rate = target_rate;
    return out;
  }
  const std::size_t n = w.samples.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / w.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const double step = static_cast<double>(w.sample_rate) / target_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= n) {
      out.samples[i] = w.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = w.samples[lo] + frac * (w.samples[lo + 1] - w.samples[lo]);
  }
  return out;
}

void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw InvariantError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  std::vector<std::complex<double>> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = {std::cos(ang), std::sin(ang)};
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto u = x[i + k];
        const auto v = x[i + k + half] * twiddle[k * stride];
        x[i + k] = u + v;
        x[i + k + half] = u - v;
      }
    }
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

Spectrogram stft(const Waveform& w, int fft_size, int hop) {
  if (fft_size <= 0 || !is_power_of_two(static_cast<std::size_t>(fft_size))) {
    throw InvariantError("stft: fft_size must be a power of two");
  }
  if (hop <= 0 || hop > fft_size) throw InvariantError("stft: need 0 < hop <= fft_size");

  Spectrogram s;
  s.sample_rate = w.sample_rate;
  s.fft_size = fft_size;
  s.hop = hop;
  const std::size_t n = w.samples.size();
  const std::size_t bins = static_cast<std::size_t>(fft_size) / 2 + 1;
  if (n == 0) {
    s.bins = RowMatrix<std::complex<double>>(0, bins);
    return s;
  }
  const std::size_t frames = (n + static_cast<std::size_t>(hop) - 1) / static_cast<std::size_t>(hop);
  s.bins = RowMatrix<std::complex<double>>(frames, bins);

  const auto window = hann_window(static_cast<std::size_t>(fft_size));
  const long long half = fft_size / 2;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(fft_size));
  for (std::size_t f = 0; f < frames; ++f) {
    const long long start = static_cast<long long>(f) * hop - half;
    for (int i = 0; i < fft_size; ++i) {
      const double v = w.samples[reflect_index(start + i, n)];
      buf[static_cast<std::size_t>(i)] = {v * window[static_cast<std::size_t>(i)], 0.0};
    }
    fft(buf);
    auto row = s.bins.row(f);
    for (std::size_t k = 0; k < bins; ++k) row[k] = buf[k];
  }
  return s;
}

MagnitudeSpectrogram magnitude(const Spectrogram& s) {
  MagnitudeSpectrogram m;
  m.sample_rate = s.sample_rate;
  m.fft_size = s.fft_size;
  m.mag = RowMatrix<double>(s.frames(), s.num_bins());
  for (std::size_t i = 0; i < s.bins.data().size(); ++i) m.mag.data()[i] = std::abs(s.bins.data()[i]);
  return m;
}

}  // namespace mdl::audio
