#include "mdl/audio/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "mdl/binary_io.hpp"
#include "mdl/error.hpp"

namespace mdl::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  std::size_t offset = 0;
};

std::string read_tag(io::ByteReader& r) {
  auto b = r.get_bytes(4);
  return {reinterpret_cast<const char*>(b.data()), 4};
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (read_tag(r) != "RIFF") throw DecodeError("missing RIFF header", 0);
  r.get<std::uint32_t>();
  if (read_tag(r) != "WAVE") throw DecodeError("missing WAVE tag", 8);

  FormatChunk fmt;
  bool have_fmt = false;
  std::span<const std::uint8_t> payload;
  std::size_t payload_offset = 0;
  bool have_data = false;

  while (r.remaining() >= 8 && !have_data) {
    const std::size_t chunk_start = r.offset();
    const std::string tag = read_tag(r);
    const auto size = r.get<std::uint32_t>();
    if (tag == "fmt ") {
      if (size < 16) throw DecodeError("fmt chunk too short", chunk_start);
      io::ByteReader f(r.get_bytes(size));
      fmt.offset = chunk_start + 8;
      fmt.format = f.get<std::uint16_t>();
      fmt.channels = f.get<std::uint16_t>();
      fmt.sample_rate = f.get<std::uint32_t>();
      f.get<std::uint32_t>();  // byte rate
      f.get<std::uint16_t>();  // block align
      fmt.bits = f.get<std::uint16_t>();
      if (fmt.format == kFormatExtensible) {
        if (size < 40) throw DecodeError("extensible fmt chunk too short", chunk_start);
        f.get<std::uint16_t>();  // cb size
        f.get<std::uint16_t>();  // valid bits
        f.get<std::uint32_t>();  // channel mask
        fmt.format = f.get<std::uint16_t>();  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (tag == "data") {
      payload_offset = r.offset();
      const std::size_t n = std::min<std::size_t>(size, r.remaining());
      payload = r.get_bytes(n);
      have_data = true;
    } else {
      r.skip(std::min<std::size_t>(size, r.remaining()));
    }
    if (!have_data && (size & 1u) && r.remaining() > 0) r.skip(1);
  }

  if (!have_fmt) throw DecodeError("missing fmt chunk", r.offset());
  if (!have_data) throw DecodeError("missing data chunk", r.offset());
  if (fmt.channels == 0) throw DecodeError("zero channels", fmt.offset + 2);
  if (fmt.sample_rate == 0) throw DecodeError("zero sample rate", fmt.offset + 4);

  const bool pcm16 = fmt.format == kFormatPcm && fmt.bits == 16;
  const bool float32 = fmt.format == kFormatFloat && fmt.bits == 32;
  if (!pcm16 && !float32) {
    throw DecodeError("unsupported encoding (format " + std::to_string(fmt.format) + ", " +
                          std::to_string(fmt.bits) + " bits); need 16-bit PCM or 32-bit float",
                      fmt.offset);
  }

  const std::size_t sample_bytes = fmt.bits / 8;
  const std::size_t frame_bytes = sample_bytes * fmt.channels;
  const std::size_t frames = payload.size() / frame_bytes;

  Waveform w;
  w.sample_rate = static_cast<int>(fmt.sample_rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      const std::uint8_t* p = payload.data() + i * frame_bytes + c * sample_bytes;
      if (pcm16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        acc += static_cast<double>(v) / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        if (!std::isfinite(v)) {
          throw DecodeError("non-finite float sample", payload_offset + i * frame_bytes + c * sample_bytes);
        }
        acc += static_cast<double>(v);
      }
    }
    w.samples[i] = acc / fmt.channels;
  }
  return w;
}

Waveform load_wav(const std::filesystem::path& path) {
  return io::decode_file(path, [](auto bytes) { return decode_wav(bytes); });
}

std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  io::ByteWriter out;
  out.put_magic("RIFF");
  out.put<std::uint32_t>(36 + 2 * n);
  out.put_magic("WAVE");
  out.put_magic("fmt ");
  out.put<std::uint32_t>(16);
  out.put<std::uint16_t>(kFormatPcm);
  out.put<std::uint16_t>(1);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate) * 2);
  out.put<std::uint16_t>(2);
  out.put<std::uint16_t>(16);
  out.put_magic("data");
  out.put<std::uint32_t>(2 * n);
  for (double s : w.samples) {
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    out.put(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0)));
  }
  return out.release();
}

void save_wav(const std::filesystem::path& path, const Waveform& w) {
  io::write_file(path, encode_wav_pcm16(w));
}

}  // namespace mdl::audio
