#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdl/audio/features.hpp"
#include "mdl/pose/geometry.hpp"

namespace mdl::data {

// One song: feature frame i (t = i/60) paired with poses[i].
struct PairSequence {
  std::string song_id;
  std::string genre;
  audio::FeatureStream features;
  std::vector<pose::JointPose> poses;

  std::size_t frames() const { return poses.size(); }
};

// For each feature frame, the pose nearest in time; ties go to the earlier pose.
// Throws InputError on an empty or unsorted pose list or an empty feature stream.
PairSequence pair_sequences(audio::FeatureStream features, std::span<const pose::JointPose> poses,
                            std::string song_id = {}, std::string genre = {});

// Index of the nearest pose for every feature frame (monotone non-decreasing).
std::vector<std::size_t> nearest_pose_indices(std::size_t feature_frames, std::span<const pose::JointPose> poses);

// MDLS: magic, u32 version, string id, string genre, u32 length + MDLF bytes,
// then MDLP bytes to the end.
inline constexpr std::uint32_t kPairFileVersion = 1;
std::vector<std::uint8_t> encode_pair_file(const PairSequence& p);
PairSequence decode_pair_file(std::span<const std::uint8_t> bytes);
void save_pair_file(const std::filesystem::path& path, const PairSequence& p);
PairSequence load_pair_file(const std::filesystem::path& path);

// Corpus manifest. Relative paths resolve against the manifest's directory.
struct SongEntry {
  std::string id;
  std::string genre;
  std::filesystem::path audio;
  std::filesystem::path keypoints;
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> poses;
  std::optional<std::filesystem::path> pair;
};

struct Manifest {
  std::vector<SongEntry> songs;

  const SongEntry& find(const std::string& id) const;
  // Throws InputError on malformed JSON, missing fields, or duplicate ids.
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// Loads a song's paired sequence from whatever artifacts the entry provides:
// a pair file, else feature + pose files, else raw audio + keypoints.
PairSequence load_song(const SongEntry& entry);

enum class SplitMode { kPerGenre, kAllGenre, kKFold };
std::string to_string(SplitMode m);
SplitMode parse_split_mode(const std::string& s);

struct SplitSpec {
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;

  bool operator==(const SplitSpec&) const = default;
};

inline constexpr std::size_t kDefaultFolds = 10;

// per-genre: leave-one-out within each genre (genres in sorted order).
// all-genre: fold f validates the f-th song (by id) of every genre; the fold
//   count is the smallest genre size.
// k-fold: songs sorted by id, cut into `folds` contiguous validation blocks.
// Throws InputError when a genre has fewer than 2 songs or the corpus has
// fewer songs than folds.
std::vector<SplitSpec> cross_validation_splits(std::span<const SongEntry> corpus, SplitMode mode,
                                               std::size_t folds = kDefaultFolds);

// {"train": [...], "validation": [...]}
SplitSpec load_split(const std::filesystem::path& path);
void save_split(const std::filesystem::path& path, const SplitSpec& s);

// Synthetic music/dance pairs. Genres differ in tempo, register and timbre.
inline constexpr std::size_t kSynthGenres = 2;
std::string synth_genre_name(std::size_t genre);

struct SynthSong {
  audio::Waveform audio;                   // 24 kHz, already quantized to 16-bit
  std::vector<pose::Keypoints> keypoints;  // 60 Hz
  std::vector<pose::JointPose> poses;      // ground truth angles, 60 Hz
};

// Deterministic in (seed, duration_s, genre, difficulty). Poses are a fixed,
// causal function of the song's own raw feature frames; difficulty in [0, 1]
// scales the noise-burst level. Throws InvariantError on duration_s <= 0.
SynthSong synth_pair(std::uint64_t seed, double duration_s, std::size_t genre = 0, double difficulty = 0.5);

// Pose driver used by synth_pair, exposed for tests.
std::vector<pose::JointPose> synth_poses_from_features(const audio::FeatureStream& raw);

// Forward kinematics for the synthetic skeleton: aligned body, right arm
// placed so that joint_angles recovers `q`.
pose::Keypoints synth_keypoints(const pose::JointPose& q);

// Writes <out>/<id>.wav, <out>/<id>.keypoints.jsonl and <out>/manifest.json
// for `songs` songs whose genres cycle over the synthetic genres.
Manifest write_synth_corpus(const std::filesystem::path& out, std::uint64_t seed, double duration_s,
                            std::size_t songs, double difficulty = 0.5);

}  // namespace mdl::data
