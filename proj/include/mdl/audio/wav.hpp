#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mdl::audio {

// Mono signal with amplitudes in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Decodes PCM WAV (16-bit integer or 32-bit float, any channel count;
// channels are averaged to mono). Throws DecodeError with the byte offset of
// the first malformed field.
Waveform decode_wav(std::span<const std::uint8_t> bytes);
Waveform load_wav(const std::filesystem::path& path);

// 16-bit PCM mono. Samples are clamped to [-1, 1) before quantization.
std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w);
void save_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace mdl::audio
