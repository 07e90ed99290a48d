#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdl/audio/normalizer.hpp"
#include "mdl/data/dataset.hpp"
#include "mdl/model/config.hpp"

namespace mdl::train {

struct TrainConfig {
  std::size_t updates = 250000;
  std::size_t batch = 16;
  double lr = 1e-4;
  std::size_t validate_every = 1000;
  std::uint64_t seed = 0;
  model::ModelConfig model;  // variant and window live here
  std::filesystem::path manifest;
  data::SplitMode split = data::SplitMode::kAllGenre;
  std::size_t fold = 0;
  std::size_t jobs = 1;

  // Throws InvariantError on non-positive sizes or an empty manifest path.
  void validate() const;

  nlohmann::json to_json() const;
  // Missing fields keep their defaults; "window" and "variant" may be given at
  // the top level or inside "model". Relative manifest paths resolve against
  // `base_dir`.
  static TrainConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static TrainConfig load(const std::filesystem::path& path);
};

// Raised when the loss stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Normalized train/validation songs for one split fold.
struct TrainData {
  std::vector<data::PairSequence> train;
  std::vector<data::PairSequence> validation;
  audio::Normalizer normalizer;  // fitted on `train` only
  std::size_t longest_song = 0;  // frames, over both sets
};

// Fits the normalizer on the training songs and applies it to both sets.
TrainData prepare_data(std::vector<data::PairSequence> train_songs, std::vector<data::PairSequence> validation_songs);
// Loads the manifest, picks split fold `cfg.fold` and prepares it.
TrainData prepare_data(const TrainConfig& cfg);

struct TrainOutcome {
  std::size_t steps = 0;
  double last_loss = 0.0;
  double best_aje = 0.0;
  std::size_t best_step = 0;
  std::vector<double> losses;  // per step run in this call
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  bool resume = false;
  std::ostream* log = nullptr;
};

// Adam on the mean L2 loss over sampled windows. Every validate_every steps
// and at the end the validation songs are translated and scored; the latest
// and best-AJE checkpoints, metrics.csv and the trainer state are written to
// out_dir. With resume, training continues from out_dir's saved state.
TrainOutcome train(const TrainConfig& cfg, const TrainData& data, const TrainOptions& options);

}  // namespace mdl::train
