#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mdl/ad/tensor.hpp"
#include "mdl/audio/features.hpp"
#include "mdl/data/dataset.hpp"
#include "mdl/matrix.hpp"
#include "mdl/model/sequence_model.hpp"

namespace mdl::train {

// The K-slot window ending at song frame t. Slot i < valid_len holds frame
// start + i; later slots are zero padding.
struct TrainingWindow {
  RowMatrix<float> audio;    // K x feature_dim
  RowMatrix<float> shifted;  // K x pose_dim, slot 0 is the zero start pose
  RowMatrix<float> target;   // K x pose_dim
  std::size_t valid_len = 0;
  std::size_t start = 0;     // song frame of slot 0
  std::size_t song = 0;      // index into the corpus it was drawn from
};

// Builds the window ending at frame t. `poses` may be shorter than the song
// (during generation it holds the poses produced so far); target slots past
// its end are zero. Requires poses.size() >= t so the shifted input exists.
TrainingWindow make_window(const audio::FeatureStream& features, std::span<const pose::JointPose> poses,
                           std::size_t t, std::size_t window);

// Uniform song, then uniform frame within it.
TrainingWindow sample_window(std::span<const data::PairSequence> corpus, std::size_t window, std::mt19937_64& rng);

// Stacks windows into model inputs with absolute position indices: audio slot
// i -> start + i + 1, pose slot 0 -> 0 (start token), pose slot i -> start + i.
template <typename T>
model::ModelInput<T> make_input(std::span<const TrainingWindow> batch);

// [B, K, pose_dim] targets.
template <typename T>
ad::Tensor<T> make_targets(std::span<const TrainingWindow> batch);

// Mean squared error over the first valid_len[b] slots of each row and all
// joints; padded slots never contribute. Throws InvariantError on valid_len 0.
template <typename T>
ad::Tensor<T> l2_loss(const ad::Tensor<T>& predicted, const ad::Tensor<T>& target,
                      const std::vector<std::size_t>& valid_len);

}  // namespace mdl::train
