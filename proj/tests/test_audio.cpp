#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "mdl/audio/dsp.hpp"
#include "mdl/audio/features.hpp"
#include "mdl/audio/normalizer.hpp"
#include "mdl/audio/wav.hpp"
#include "mdl/binary_io.hpp"

using namespace mdl;
using namespace mdl::audio;
namespace L = mdl::audio::layout;

namespace {

constexpr double kPi = std::numbers::pi;

Waveform sine(double hz, double seconds, int rate, double amp = 0.5) {
  Waveform w{std::vector<double>(static_cast<std::size_t>(seconds * rate)), rate};
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = amp * std::sin(2.0 * kPi * hz * i / rate);
  return w;
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

// Minimal WAV writer independent of the library encoder.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits, int rate,
                                    const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> b{'R', 'I', 'F', 'F'};
  put_u32(b, static_cast<std::uint32_t>(36 + payload.size()));
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<std::uint8_t>(c));
  put_u32(b, 16);
  put_u16(b, format);
  put_u16(b, channels);
  put_u32(b, static_cast<std::uint32_t>(rate));
  put_u32(b, static_cast<std::uint32_t>(rate * channels * bits / 8));
  put_u16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(b, bits);
  for (char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
  put_u32(b, static_cast<std::uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) out[k] += x[j] * std::polar(1.0, -2.0 * kPi * k * j / n);
  }
  return out;
}

}  // namespace

TEST_CASE("wav: full-scale pcm16, silence and channel averaging") {
  std::vector<std::uint8_t> pcm;
  put_u16(pcm, 32767);
  put_u16(pcm, 0);
  auto w = decode_wav(wav_bytes(1, 1, 16, 8000, pcm));
  CHECK(w.sample_rate == 8000);
  REQUIRE(w.samples.size() == 2);
  CHECK(w.samples[0] == 32767.0 / 32768.0);
  CHECK(w.samples[1] == 0.0);

  // Stereo float: channels (0.5, -0.5) average to 0.
  std::vector<std::uint8_t> fl;
  for (float v : {0.5f, -0.5f}) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(fl, bits);
  }
  w = decode_wav(wav_bytes(3, 2, 32, 44100, fl));
  REQUIRE(w.samples.size() == 1);
  CHECK(w.samples[0] == 0.0);
}

TEST_CASE("wav: malformed input reports a byte offset") {
  CHECK_THROWS_AS(decode_wav(std::vector<std::uint8_t>{'R', 'I', 'F'}), DecodeError);
  auto bad = wav_bytes(1, 1, 16, 8000, {0, 0});
  bad[8] = 'X';
  try {
    decode_wav(bad);
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.offset() == 8);
  }
  // 8-bit PCM is unsupported.
  CHECK_THROWS_AS(decode_wav(wav_bytes(1, 1, 8, 8000, {0, 0})), DecodeError);
}

TEST_CASE("wav: pcm16 encode/decode round trip within one quantization step") {
  const auto w = sine(220.0, 0.1, 16000, 0.7);
  const auto back = decode_wav(encode_wav_pcm16(w));
  REQUIRE(back.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(back.samples[i] - w.samples[i]) <= 1.0 / 32768);
}

TEST_CASE("resample: identity, constant and sine accuracy") {
  const auto w = sine(100.0, 0.5, 48000);
  const auto same = resample(w, 48000);
  CHECK(same.samples == w.samples);

  Waveform c{std::vector<double>(4410, 0.3), 44100};
  for (double v : resample(c, 24000).samples) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));

  const auto r = resample(w, 24000);
  CHECK(r.sample_rate == 24000);
  CHECK(r.samples.size() == 12000);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const double expected = 0.5 * std::sin(2.0 * kPi * 100.0 * i / 24000.0);
    err += (r.samples[i] - expected) * (r.samples[i] - expected);
    ref += expected * expected;
  }
  CHECK(std::sqrt(err / ref) < 0.01);
}

TEST_CASE("fft matches a naive DFT") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {1u, 2u, 8u, 64u, 256u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {u(rng), u(rng)};
    const auto expected = naive_dft(x);
    fft(x);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(x[k] - expected[k]) < 1e-9);
  }
  std::vector<std::complex<double>> bad(6);
  CHECK_THROWS(fft(bad));
}

TEST_CASE("stft: frame count, silence, peak bin and Parseval") {
  const int rate = 24000;
  Waveform z{std::vector<double>(1000, 0.0), rate};
  const auto zs = magnitude(stft(z, 512, 128));
  CHECK(zs.frames() == 8);  // ceil(1000/128)
  CHECK(zs.num_bins() == 257);
  for (double v : zs.mag.data()) CHECK(v == 0.0);

  const int n = 1024;
  const std::size_t bin = 40;
  const auto w = sine(static_cast<double>(bin) * rate / n, 0.5, rate);
  const auto m = magnitude(stft(w, n, 256));
  const std::size_t t = m.frames() / 2;
  for (std::size_t k = 0; k < m.num_bins(); ++k) {
    if (k + 1 < bin || k > bin + 1) CHECK(m.mag(t, bin) >= 100.0 * m.mag(t, k));
  }

  // Parseval on one interior frame: sum |X_k|^2 over the full spectrum = n * sum (w x)^2.
  const auto s = stft(w, n, 256);
  const auto hann = hann_window(n);
  const std::size_t center = t * 256;
  double time_energy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = hann[i] * w.samples[center - n / 2 + i];
    time_energy += v * v;
  }
  double spec = 0.0;
  for (std::size_t k = 0; k < s.num_bins(); ++k) {
    const double e = std::norm(s.bins(t, k));
    spec += (k == 0 || k == s.num_bins() - 1) ? e : 2.0 * e;
  }
  CHECK(std::abs(spec / n - time_energy) / time_energy < 1e-6);
}

TEST_CASE("dct2 orthonormal against a direct sum") {
  std::vector<double> x{1.0, -2.0, 0.5, 3.0, 0.0, 1.5};
  const auto c = dct2_ortho(x, 6);
  const double n = 6.0;
  for (std::size_t k = 0; k < 6; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 6; ++i) acc += x[i] * std::cos(kPi / n * (i + 0.5) * k);
    acc *= std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    CHECK(c[k] == doctest::Approx(acc).epsilon(1e-12));
  }
  // Orthonormal: energy preserved.
  double ex = 0.0, ec = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    ex += x[i] * x[i];
    ec += c[i] * c[i];
  }
  CHECK(ec == doctest::Approx(ex).epsilon(1e-12));
}

TEST_CASE("mfcc: silence gives only c0, gain shifts only c0") {
  RowMatrix<double> floor_frames(2, kMelBands, 10.0 * std::log10(kLogFloor));
  const auto c = mfcc_from_log_mel(floor_frames);
  REQUIRE(c.cols() == 20);
  CHECK(c(0, 0) == doctest::Approx(std::sqrt(static_cast<double>(kMelBands)) * -100.0).epsilon(1e-12));
  for (std::size_t k = 1; k < 20; ++k) CHECK(std::abs(c(0, k)) < 1e-9);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.2);
  Waveform w{std::vector<double>(12000), kAnalysisRate};
  for (auto& v : w.samples) v = g(rng);
  Waveform w2 = w;
  for (auto& v : w2.samples) v *= 2.0;
  const auto a = mfcc(magnitude(stft(w, kFftSize, kHop)));
  const auto b = mfcc(magnitude(stft(w2, kFftSize, kHop)));
  for (std::size_t t = 0; t < a.rows(); ++t) {
    CHECK(b(t, 0) - a(t, 0) == doctest::Approx(20.0 * std::log10(2.0) * std::sqrt(128.0)).epsilon(1e-6));
    for (std::size_t k = 1; k < 20; ++k) CHECK(std::abs(b(t, k) - a(t, k)) < 1e-6);
  }
}

TEST_CASE("mfcc delta: constant, ramp and single frame") {
  RowMatrix<double> constant(5, 20, 3.0);
  const auto d0 = mfcc_delta(constant);
  for (double v : d0.data()) CHECK(v == 0.0);

  RowMatrix<double> ramp(6, 20);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t k = 0; k < 20; ++k) ramp(t, k) = static_cast<double>(t) * (k + 1);
  }
  const auto d = mfcc_delta(ramp);
  for (std::size_t t = 1; t + 1 < 6; ++t) {
    for (std::size_t k = 0; k < 20; ++k) CHECK(d(t, k) == doctest::Approx(k + 1.0));
  }
  RowMatrix<double> one(1, 20, 7.0);
  const auto d1 = mfcc_delta(one);
  for (double v : d1.data()) CHECK(v == 0.0);
}

TEST_CASE("chroma: A4, octave mixture and silence") {
  auto a4 = magnitude(stft(sine(440.0, 0.5, kAnalysisRate), kFftSize, kHop));
  auto c = chromagram(a4);
  const std::size_t t = c.rows() / 2;
  CHECK(std::max_element(c.row(t).begin(), c.row(t).end()) - c.row(t).begin() == 9);
  CHECK(c(t, 9) == 1.0);

  auto mix = sine(440.0, 0.5, kAnalysisRate);
  const auto hi = sine(880.0, 0.5, kAnalysisRate, 0.3);
  for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += hi.samples[i];
  c = chromagram(magnitude(stft(mix, kFftSize, kHop)));
  CHECK(std::max_element(c.row(t).begin(), c.row(t).end()) - c.row(t).begin() == 9);

  Waveform silent{std::vector<double>(4000, 0.0), kAnalysisRate};
  const auto quiet = chromagram(magnitude(stft(silent, kFftSize, kHop)));
  for (double v : quiet.data()) CHECK(v == 0.0);
}

TEST_CASE("onset strength: constant, step and decay") {
  RowMatrix<double> flat(5, kMelBands, -20.0);
  const auto o0 = onset_strength_from_log_mel(flat);
  for (double v : o0) CHECK(v == 0.0);

  // Silence then a loud step at frame 3: spike equals the mean rectified rise.
  RowMatrix<double> step(6, kMelBands, -100.0);
  for (std::size_t t = 3; t < 6; ++t) {
    for (std::size_t b = 0; b < kMelBands; ++b) step(t, b) = -100.0 + static_cast<double>(b % 4) * 10.0 + 60.0;
  }
  const auto o1 = onset_strength_from_log_mel(step);
  CHECK(o1[3] == doctest::Approx(60.0 + 15.0));
  for (std::size_t t : {0u, 1u, 2u, 4u, 5u}) CHECK(o1[t] == 0.0);

  RowMatrix<double> decay(6, kMelBands);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t b = 0; b < kMelBands; ++b) decay(t, b) = -10.0 * static_cast<double>(t);
  }
  for (double v : onset_strength_from_log_mel(decay)) CHECK(v == 0.0);
}

TEST_CASE("tempogram: period-30 impulse train, constant envelope, lag-0 normalization") {
  std::vector<double> onset(900, 0.0);
  for (std::size_t t = 0; t < onset.size(); t += 30) onset[t] = 1.0;
  const auto tg = tempogram(onset);
  REQUIRE(tg.cols() == 384);
  const std::size_t t = 450;
  CHECK(tg(t, 0) == doctest::Approx(1.0));
  for (std::size_t lag : {30u, 60u, 90u}) {
    CHECK(tg(t, lag) > tg(t, lag - 1));
    CHECK(tg(t, lag) > tg(t, lag + 1));
  }

  std::vector<double> flat(500, 2.0);
  const auto tg_flat = tempogram(flat);
  for (double v : tg_flat.data()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("beat flags: silence, single spike, impulse train") {
  std::vector<double> silent(100, 0.0);
  for (double v : beat_flags(silent)) CHECK(v == 0.0);

  std::vector<double> spike(100, 0.0);
  spike[37] = 4.0;
  const auto f = beat_flags(spike);
  for (std::size_t t = 0; t < 100; ++t) CHECK(f[t] == (t == 37 ? 1.0 : 0.0));

  std::vector<double> train(300, 0.0);
  for (std::size_t t = 0; t < 300; t += 30) train[t] = 1.0;
  const auto g = beat_flags(train);
  for (std::size_t t = 0; t < 300; ++t) CHECK(g[t] == (t % 30 == 0 ? 1.0 : 0.0));
}

TEST_CASE("assembled features: 438 dims at 60 Hz, fixed layout, non-negative streams") {
  Waveform w = sine(330.0, 10.0, 44100, 0.3);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& v : w.samples) v += u(rng);
  const auto s = extract_features(w);
  CHECK(s.frames() == 600);
  CHECK(s.values.cols() == 438);
  CHECK(s.timestamp(30) == 0.5);

  const auto set = compute_feature_set(magnitude(stft(resample(w, kAnalysisRate), kFftSize, kHop)));
  const auto assembled = assemble_features(set);
  CHECK(assembled.values == s.values);
  for (std::size_t t = 0; t < s.frames(); t += 37) {
    CHECK(s.values(t, L::kChromaOffset + 4) == static_cast<float>(set.chroma(t, 4)));
    CHECK(s.values(t, L::kTempogramOffset) == static_cast<float>(set.tempogram(t, 0)));
    CHECK(s.values(t, L::kOnsetOffset) == static_cast<float>(set.onset[t]));
    CHECK(s.values(t, L::kBeatOffset) == static_cast<float>(set.beat[t]));
    CHECK(s.values(t, L::kOnsetOffset) >= 0.0f);
    for (std::size_t k = 0; k < L::kChroma; ++k) CHECK(s.values(t, L::kChromaOffset + k) >= 0.0f);
  }

  auto broken = set;
  broken.onset.pop_back();
  CHECK_THROWS_AS(assemble_features(broken), StructuralError);
}

TEST_CASE("feature extraction is deterministic") {
  const auto w = sine(250.0, 2.0, 22050, 0.4);
  CHECK(encode_feature_file(extract_features(w)) == encode_feature_file(extract_features(w)));
}

TEST_CASE("normalizer: endpoints, midpoint, clamp, constant dimension") {
  Normalizer n({0.0, 5.0}, {10.0, 5.0});
  CHECK(n.apply(0, 0.0) == 0.1f);
  CHECK(n.apply(0, 10.0) == 0.9f);
  CHECK(n.apply(0, 5.0) == doctest::Approx(0.5f));
  CHECK(n.apply(0, 15.0) == 0.9f);
  CHECK(n.apply(0, -3.0) == 0.1f);
  CHECK(n.apply(1, 5.0) == 0.5f);
  CHECK(n.apply(1, 123.0) == 0.5f);
}

TEST_CASE("normalizer fit: union equals merge, single frame degenerate, empty rejected") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  FeatureStream a{RowMatrix<float>(7, kFeatureDim)}, b{RowMatrix<float>(4, kFeatureDim)};
  for (auto& v : a.values.data()) v = u(rng);
  for (auto& v : b.values.data()) v = u(rng);
  FeatureStream both = a;
  for (std::size_t t = 0; t < b.frames(); ++t) both.values.append_row(b.values.row(t));
  const FeatureStream* songs[] = {&a, &b};
  CHECK(fit_normalizer(songs) == fit_normalizer(both));

  NormalizerFit fa, fb;
  fa.add(a);
  fb.add(b);
  fa.merge(fb);
  CHECK(fa.finish() == fit_normalizer(both));

  FeatureStream one{RowMatrix<float>(1, kFeatureDim, 1.5f)};
  const auto n1 = fit_normalizer(one);
  CHECK(n1.min() == n1.max());
  CHECK_THROWS(NormalizerFit().finish());

  // Every normalized value of an unseen song stays in range.
  FeatureStream c{RowMatrix<float>(20, kFeatureDim)};
  for (auto& v : c.values.data()) v = 3.0f * u(rng);
  for (float v : fit_normalizer(both).apply(c).values.data()) {
    CHECK(v >= 0.1f);
    CHECK(v <= 0.9f);
  }
}

TEST_CASE("feature and normalizer files round trip; corruption is a decode error") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  FeatureStream s{RowMatrix<float>(5, kFeatureDim)};
  for (auto& v : s.values.data()) v = u(rng);
  const auto bytes = encode_feature_file(s);
  CHECK(decode_feature_file(bytes).values == s.values);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_feature_file(truncated), DecodeError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_feature_file(bad_magic), DecodeError);

  Normalizer n({0.0, 1.0}, {2.0, 3.0});
  CHECK(decode_normalizer(encode_normalizer(n)) == n);

  const auto dir = std::filesystem::temp_directory_path() / "mdl_test_audio";
  std::filesystem::create_directories(dir);
  save_feature_file(dir / "a.mdlf", s);
  CHECK(load_feature_file(dir / "a.mdlf").values == s.values);
  io::write_file(dir / "bad.mdlf", truncated);
  try {
    load_feature_file(dir / "bad.mdlf");
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(std::string(e.what()).find("bad.mdlf") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
