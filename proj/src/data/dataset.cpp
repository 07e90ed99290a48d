#include "mdl/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include <Eigen/Geometry>

#include "mdl/ad/ops.hpp"
#include "mdl/audio/normalizer.hpp"
#include "mdl/binary_io.hpp"
#include "mdl/error.hpp"

namespace mdl::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> nearest_pose_indices(std::size_t feature_frames, std::span<const pose::JointPose> poses) {
  if (poses.empty()) throw InputError("pairing: pose list is empty");
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (poses[i].timestamp < poses[i - 1].timestamp) {
      throw InputError("pairing: pose timestamps are not sorted (index " + std::to_string(i) + ")");
    }
  }
  std::vector<std::size_t> out(feature_frames);
  std::size_t j = 0;
  for (std::size_t i = 0; i < feature_frames; ++i) {
    const double t = audio::frame_timestamp(i);
    // Strictly closer only: equal distance keeps the earlier pose.
    while (j + 1 < poses.size() && std::abs(poses[j + 1].timestamp - t) < std::abs(poses[j].timestamp - t)) ++j;
    out[i] = j;
  }
  return out;
}

PairSequence pair_sequences(audio::FeatureStream features, std::span<const pose::JointPose> poses,
                            std::string song_id, std::string genre) {
  if (features.frames() == 0) throw InputError("pairing: feature stream is empty");
  const auto idx = nearest_pose_indices(features.frames(), poses);
  PairSequence p{std::move(song_id), std::move(genre), std::move(features), {}};
  p.poses.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    pose::JointPose q = poses[idx[i]];
    q.timestamp = audio::frame_timestamp(i);
    p.poses.push_back(q);
  }
  return p;
}

std::vector<std::uint8_t> encode_pair_file(const PairSequence& p) {
  if (p.features.frames() != p.poses.size()) throw StructuralError("pair file: feature and pose counts differ");
  io::ByteWriter w;
  w.put_magic("MDLS");
  w.put(kPairFileVersion);
  w.put_string(p.song_id);
  w.put_string(p.genre);
  const auto features = audio::encode_feature_file(p.features);
  w.put(static_cast<std::uint32_t>(features.size()));
  w.put_bytes(features);
  w.put_bytes(pose::encode_pose_file(p.poses));
  return w.release();
}

PairSequence decode_pair_file(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("MDLS");
  const auto version_at = r.offset();
  if (const auto v = r.get<std::uint32_t>(); v != kPairFileVersion) {
    throw DecodeError("unsupported pair file version " + std::to_string(v), version_at);
  }
  PairSequence p;
  p.song_id = r.get_string();
  p.genre = r.get_string();
  const auto n = r.get<std::uint32_t>();
  const auto features_at = r.offset();
  p.features = audio::decode_feature_file(r.get_bytes(n));
  const auto poses_at = r.offset();
  p.poses = pose::decode_pose_file(r.get_bytes(r.remaining()));
  if (p.poses.size() != p.features.frames()) {
    throw DecodeError("pair file: " + std::to_string(p.features.frames()) + " feature frames (block at " +
                          std::to_string(features_at) + ") but " + std::to_string(p.poses.size()) + " poses",
                      poses_at);
  }
  return p;
}

void save_pair_file(const fs::path& path, const PairSequence& p) { io::write_file(path, encode_pair_file(p)); }
PairSequence load_pair_file(const fs::path& path) { return io::decode_file(path, [](auto bytes) { return decode_pair_file(bytes); }); }

// ---------------------------------------------------------------------------
// Manifest

const SongEntry& Manifest::find(const std::string& id) const {
  for (const auto& s : songs) {
    if (s.id == id) return s;
  }
  throw InputError("manifest: unknown song id '" + id + "'");
}

Manifest Manifest::load(const fs::path& path) {
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw InputError("manifest " + path.string() + ": invalid JSON: " + e.what());
  }
  Manifest m;
  std::set<std::string> seen;
  try {
    for (const auto& s : j.at("songs")) {
      SongEntry e;
      e.id = s.at("id").get<std::string>();
      e.genre = s.value("genre", std::string{});
      e.audio = resolve(s.value("audio", std::string{}));
      e.keypoints = resolve(s.value("keypoints", std::string{}));
      if (s.contains("features")) e.features = resolve(s.at("features").get<std::string>());
      if (s.contains("poses")) e.poses = resolve(s.at("poses").get<std::string>());
      if (s.contains("pair")) e.pair = resolve(s.at("pair").get<std::string>());
      if (e.id.empty()) throw InputError("manifest " + path.string() + ": empty song id");
      if (!seen.insert(e.id).second) throw InputError("manifest " + path.string() + ": duplicate song id " + e.id);
      m.songs.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw InputError("manifest " + path.string() + ": " + e.what());
  }
  if (m.songs.empty()) throw InputError("manifest " + path.string() + ": no songs");
  return m;
}

void Manifest::save(const fs::path& path) const {
  const auto base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    if (base.empty() || !p.is_absolute()) return p.generic_string();
    const auto r = p.lexically_relative(base);
    if (r.empty() || *r.begin() == "..") return p.generic_string();
    return r.generic_string();
  };
  json arr = json::array();
  for (const auto& s : songs) {
    json e = {{"id", s.id}, {"genre", s.genre}, {"audio", rel(s.audio)}, {"keypoints", rel(s.keypoints)}};
    if (s.features) e["features"] = rel(*s.features);
    if (s.poses) e["poses"] = rel(*s.poses);
    if (s.pair) e["pair"] = rel(*s.pair);
    arr.push_back(std::move(e));
  }
  io::write_text_file(path, json{{"songs", arr}}.dump(2) + "\n");
}

PairSequence load_song(const SongEntry& entry) {
  PairSequence p;
  if (entry.pair) {
    p = load_pair_file(*entry.pair);
  } else {
    auto features = entry.features ? audio::load_feature_file(*entry.features)
                                   : audio::extract_features(audio::load_wav(entry.audio));
    std::vector<pose::JointPose> poses;
    if (entry.poses) {
      poses = pose::load_pose_file(*entry.poses);
    } else {
      for (const auto& k : pose::load_keypoints(entry.keypoints)) poses.push_back(pose::keypoints_to_pose(k));
    }
    p = pair_sequences(std::move(features), poses);
  }
  p.song_id = entry.id;
  p.genre = entry.genre;
  return p;
}

// ---------------------------------------------------------------------------
// Splits

std::string to_string(SplitMode m) {
  switch (m) {
    case SplitMode::kPerGenre: return "per-genre";
    case SplitMode::kAllGenre: return "all-genre";
    case SplitMode::kKFold: return "k-fold";
  }
  return "?";
}

SplitMode parse_split_mode(const std::string& s) {
  if (s == "per-genre") return SplitMode::kPerGenre;
  if (s == "all-genre") return SplitMode::kAllGenre;
  if (s == "k-fold") return SplitMode::kKFold;
  throw InputError("unknown split mode '" + s + "' (expected per-genre, all-genre or k-fold)");
}

namespace {

std::map<std::string, std::vector<std::string>> songs_by_genre(std::span<const SongEntry> corpus) {
  std::map<std::string, std::vector<std::string>> g;
  for (const auto& s : corpus) g[s.genre].push_back(s.id);
  for (auto& [name, ids] : g) {
    std::sort(ids.begin(), ids.end());
    if (ids.size() < 2) {
      throw InputError("split: genre '" + name + "' has " + std::to_string(ids.size()) + " song(s), need at least 2");
    }
  }
  return g;
}

SplitSpec complement(std::span<const SongEntry> corpus, std::vector<std::string> validation) {
  std::sort(validation.begin(), validation.end());
  SplitSpec s;
  for (const auto& e : corpus) {
    if (!std::binary_search(validation.begin(), validation.end(), e.id)) s.train_ids.push_back(e.id);
  }
  std::sort(s.train_ids.begin(), s.train_ids.end());
  s.validation_ids = std::move(validation);
  return s;
}

}  // namespace

std::vector<SplitSpec> cross_validation_splits(std::span<const SongEntry> corpus, SplitMode mode, std::size_t folds) {
  if (corpus.empty()) throw InputError("split: corpus is empty");
  std::vector<SplitSpec> out;
  switch (mode) {
    case SplitMode::kPerGenre:
      for (const auto& [genre, ids] : songs_by_genre(corpus)) {
        for (const auto& held : ids) {
          SplitSpec s;
          for (const auto& id : ids) {
            if (id != held) s.train_ids.push_back(id);
          }
          s.validation_ids = {held};
          out.push_back(std::move(s));
        }
      }
      break;
    case SplitMode::kAllGenre: {
      const auto g = songs_by_genre(corpus);
      std::size_t n = std::numeric_limits<std::size_t>::max();
      for (const auto& [genre, ids] : g) n = std::min(n, ids.size());
      for (std::size_t f = 0; f < n; ++f) {
        std::vector<std::string> val;
        for (const auto& [genre, ids] : g) val.push_back(ids[f]);
        out.push_back(complement(corpus, std::move(val)));
      }
      break;
    }
    case SplitMode::kKFold: {
      if (folds < 2) throw InputError("split: k-fold needs at least 2 folds");
      if (corpus.size() < folds) {
        throw InputError("split: " + std::to_string(corpus.size()) + " songs cannot fill " + std::to_string(folds) +
                         " folds");
      }
      std::vector<std::string> ids;
      for (const auto& s : corpus) ids.push_back(s.id);
      std::sort(ids.begin(), ids.end());
      for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t lo = f * ids.size() / folds, hi = (f + 1) * ids.size() / folds;
        out.push_back(complement(corpus, {ids.begin() + static_cast<std::ptrdiff_t>(lo),
                                          ids.begin() + static_cast<std::ptrdiff_t>(hi)}));
      }
      break;
    }
  }
  return out;
}

SplitSpec load_split(const fs::path& path) {
  try {
    const auto j = json::parse(io::read_text_file(path));
    SplitSpec s{j.at("train").get<std::vector<std::string>>(), j.at("validation").get<std::vector<std::string>>()};
    for (const auto& id : s.validation_ids) {
      if (std::find(s.train_ids.begin(), s.train_ids.end(), id) != s.train_ids.end()) {
        throw InputError("split " + path.string() + ": song '" + id + "' is in both train and validation");
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError("split " + path.string() + ": " + e.what());
  }
}

void save_split(const fs::path& path, const SplitSpec& s) {
  io::write_text_file(path, json{{"train", s.train_ids}, {"validation", s.validation_ids}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct GenreStyle {
  const char* name;
  double bpm;
  double low_hz;           // register of the melody
  int harmonics;
  bool odd_only;           // square-ish timbre
  double burst_ms;
};

constexpr GenreStyle kStyles[kSynthGenres] = {
    {"synth-a", 120.0, 220.0, 3, false, 40.0},
    {"synth-b", 90.0, 110.0, 5, true, 80.0},
};

constexpr int kPentatonic[] = {0, 2, 4, 7, 9};

// Fixed pose driver: the chroma vector projected on the pitch circle (two
// axes) and on the circle of fifths (two axes), averaged over a causal window
// of frames, then squashed. Each note of the melody has its own target pose.
constexpr std::size_t kDriveWindow = 10;
constexpr double kChromaGain = 1.2;
constexpr double kShoulderRange = std::numbers::pi / 4.0;
constexpr double kBendRange = 0.45 * std::numbers::pi;

constexpr double kUpperArm = 0.30;
constexpr double kForearm = 0.25;
constexpr double kHand = 0.08;

double note_hz(double low_hz, int semitones) { return low_hz * std::pow(2.0, semitones / 12.0); }

Eigen::Vector3d rotate(const Eigen::Vector3d& v, const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()) * v;
}

}  // namespace

std::string synth_genre_name(std::size_t genre) {
  if (genre >= kSynthGenres) throw InvariantError("synth: genre index out of range");
  return kStyles[genre].name;
}

std::vector<pose::JointPose> synth_poses_from_features(const audio::FeatureStream& raw) {
  namespace L = audio::layout;
  const std::size_t n = raw.frames();
  std::vector<std::array<double, 4>> drive(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto row = raw.values.row(t);
    std::array<double, 4> d{0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < L::kChroma; ++k) {
      const double c = row[L::kChromaOffset + k];
      const double pitch = 2.0 * std::numbers::pi * static_cast<double>(k) / 12.0;
      const double fifths = 2.0 * std::numbers::pi * static_cast<double>((7 * k) % 12) / 12.0;
      d[0] += c * std::cos(pitch);
      d[1] += c * std::sin(pitch);
      d[2] += c * std::cos(fifths);
      d[3] += c * std::sin(fifths);
    }
    for (auto& v : d) v *= kChromaGain;
    drive[t] = d;
  }
  std::vector<pose::JointPose> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    // Mean over frames max(0, t - W + 1) .. t.
    const std::size_t first = t + 1 >= kDriveWindow ? t + 1 - kDriveWindow : 0;
    std::array<double, 4> avg{0.0, 0.0, 0.0, 0.0};
    for (std::size_t s = first; s <= t; ++s) {
      for (std::size_t i = 0; i < 4; ++i) avg[i] += drive[s][i];
    }
    for (auto& v : avg) v /= static_cast<double>(t - first + 1);
    auto& q = out[t].q;
    q[0] = std::numbers::pi / 2.0 + kShoulderRange * std::tanh(avg[0]);
    q[1] = std::numbers::pi / 2.0 + kShoulderRange * std::tanh(avg[1]);
    q[2] = std::numbers::pi / 2.0 + kBendRange * std::tanh(avg[2]);
    q[3] = std::numbers::pi / 2.0 + kBendRange * std::tanh(avg[3]);
    out[t].timestamp = audio::frame_timestamp(t);
  }
  return out;
}

pose::Keypoints synth_keypoints(const pose::JointPose& pose) {
  const double c1 = std::cos(pose.q[0]), c2 = std::cos(pose.q[1]);
  const double lateral_sq = 1.0 - c1 * c1 - c2 * c2;
  if (lateral_sq < 0.0) throw InvariantError("synth: shoulder angles have no consistent upper-arm direction");
  // The right arm reaches towards -x.
  const Eigen::Vector3d upper(-std::sqrt(lateral_sq), c1, c2);
  const Eigen::Vector3d bend_axis = upper.cross(pose::kOutward).normalized();
  const Eigen::Vector3d fore = rotate(upper, bend_axis, pose.q[2]);
  const Eigen::Vector3d wrist_axis = fore.cross(bend_axis).normalized();
  const Eigen::Vector3d hand = rotate(fore, wrist_axis, pose.q[3]);

  pose::Keypoints k;
  k.left_shoulder = {0.2, 0.0, 0.0};
  k.right_shoulder = {-0.2, 0.0, 0.0};
  k.pelvis = {0.0, -0.5, 0.0};
  k.elbow = k.right_shoulder + kUpperArm * upper;
  k.wrist = k.elbow + kForearm * fore;
  k.index_tip = k.wrist + kHand * hand;
  k.timestamp = pose.timestamp;
  return k;
}

SynthSong synth_pair(std::uint64_t seed, double duration_s, std::size_t genre, double difficulty) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw InvariantError("synth: duration must be positive");
  if (genre >= kSynthGenres) throw InvariantError("synth: genre index out of range");
  const auto& style = kStyles[genre];
  difficulty = std::clamp(difficulty, 0.0, 1.0);
  std::mt19937_64 rng(seed);
  auto u01 = [&] { return ad::uniform01(rng); };

  const int rate = audio::kAnalysisRate;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate));
  std::vector<double> x(n, 0.0);

  const double beat_s = 60.0 / (style.bpm * (0.95 + 0.1 * u01()));
  const int root = static_cast<int>(u01() * 12.0);
  const double burst_level = 0.1 + 0.5 * difficulty;
  const auto beat_samples = static_cast<std::size_t>(beat_s * rate);
  for (std::size_t start = 0, beat = 0; start < n; start += beat_samples, ++beat) {
    // Melody: one or two notes per beat from a pentatonic scale.
    const int splits = u01() < 0.3 ? 2 : 1;
    const std::size_t len = beat_samples / static_cast<std::size_t>(splits);
    for (int s = 0; s < splits; ++s) {
      const int degree = kPentatonic[static_cast<int>(u01() * 5.0)];
      const int octave = static_cast<int>(u01() * 2.0);
      const double f0 = note_hz(style.low_hz, root + degree + 12 * octave);
      const double amp = 0.15 + 0.15 * u01();
      const std::size_t s0 = start + static_cast<std::size_t>(s) * len;
      for (std::size_t i = 0; i < len && s0 + i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double env = std::min(1.0, t / 0.01) * std::exp(-2.5 * t / beat_s);
        double v = 0.0;
        for (int h = 1, used = 0; used < style.harmonics; ++h) {
          if (style.odd_only && h % 2 == 0) continue;
          v += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
          ++used;
        }
        x[s0 + i] += amp * env * v;
      }
    }
    // Percussion: a noise burst on every beat, louder on the downbeat.
    const double level = burst_level * (beat % 4 == 0 ? 1.0 : 0.5 + 0.3 * u01());
    const auto burst = static_cast<std::size_t>(style.burst_ms * 1e-3 * rate);
    for (std::size_t i = 0; i < burst && start + i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      x[start + i] += level * (2.0 * u01() - 1.0) * std::exp(-t / (style.burst_ms * 2.5e-4));
    }
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.95) {
    for (double& v : x) v *= 0.95 / peak;
  }

  SynthSong song;
  // Round-trip through 16-bit PCM so features of the written file match exactly.
  song.audio = audio::decode_wav(audio::encode_wav_pcm16(audio::Waveform{std::move(x), rate}));
  song.poses = synth_poses_from_features(audio::extract_features(song.audio));

  // Per-song placement and size of the skeleton; joint angles are unaffected.
  const double body_scale = 0.8 + 0.4 * u01();
  const Eigen::Vector3d offset(2.0 * u01() - 1.0, 0.5 + u01(), 2.0 * u01() - 1.0);
  song.keypoints.reserve(song.poses.size());
  for (const auto& q : song.poses) {
    auto k = synth_keypoints(q);
    k.transform_points([&](const Eigen::Vector3d& p) { return Eigen::Vector3d(body_scale * p + offset); });
    song.keypoints.push_back(k);
  }
  return song;
}

Manifest write_synth_corpus(const fs::path& out, std::uint64_t seed, double duration_s, std::size_t songs,
                            double difficulty) {
  if (songs == 0) throw InputError("synth: song count must be positive");
  fs::create_directories(out);
  Manifest m;
  std::seed_seq base{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::vector<std::uint32_t> words(2 * songs);
  base.generate(words.begin(), words.end());
  for (std::size_t i = 0; i < songs; ++i) {
    const std::size_t genre = i % kSynthGenres;
    char id[32];
    std::snprintf(id, sizeof id, "song-%03zu", i);
    const std::uint64_t song_seed = (static_cast<std::uint64_t>(words[2 * i]) << 32) | words[2 * i + 1];
    const auto song = synth_pair(song_seed, duration_s, genre, difficulty);
    SongEntry e{id, synth_genre_name(genre), out / (std::string(id) + ".wav"),
                out / (std::string(id) + ".keypoints.jsonl"), std::nullopt, std::nullopt, std::nullopt};
    audio::save_wav(e.audio, song.audio);
    pose::save_keypoints(e.keypoints, song.keypoints);
    m.songs.push_back(std::move(e));
  }
  m.save(out / "manifest.json");
  return m;
}

}  // namespace mdl::data
