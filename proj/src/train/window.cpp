#include "mdl/train/window.hpp"

#include <algorithm>

#include "mdl/ad/ops.hpp"

namespace mdl::train {

TrainingWindow make_window(const audio::FeatureStream& features, std::span<const pose::JointPose> poses,
                           std::size_t t, std::size_t window) {
  if (window == 0) throw InvariantError("window: K must be positive");
  if (t >= features.frames()) throw StructuralError("window: frame index past the end of the song");
  if (poses.size() < t) throw StructuralError("window: fewer poses than frames preceding t");
  const std::size_t dim = features.values.cols();
  constexpr std::size_t kJoints = 4;
  TrainingWindow w;
  w.valid_len = std::min(t + 1, window);
  w.start = t + 1 - w.valid_len;
  w.audio = RowMatrix<float>(window, dim);
  w.shifted = RowMatrix<float>(window, kJoints);
  w.target = RowMatrix<float>(window, kJoints);
  for (std::size_t i = 0; i < w.valid_len; ++i) {
    const std::size_t frame = w.start + i;
    std::copy_n(features.values.row(frame).begin(), dim, w.audio.row(i).begin());
    if (frame < poses.size()) {
      for (std::size_t j = 0; j < kJoints; ++j) w.target(i, j) = static_cast<float>(poses[frame].q[j]);
    }
    if (i > 0) {
      for (std::size_t j = 0; j < kJoints; ++j) w.shifted(i, j) = static_cast<float>(poses[frame - 1].q[j]);
    }
  }
  return w;
}

TrainingWindow sample_window(std::span<const data::PairSequence> corpus, std::size_t window, std::mt19937_64& rng) {
  if (corpus.empty()) throw InvariantError("sample_window: corpus is empty");
  auto pick = [&rng](std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(ad::uniform01(rng) * static_cast<double>(n)));
  };
  const std::size_t song = pick(corpus.size());
  const auto& p = corpus[song];
  auto w = make_window(p.features, p.poses, pick(p.frames()), window);
  w.song = song;
  return w;
}

template <typename T>
model::ModelInput<T> make_input(std::span<const TrainingWindow> batch) {
  if (batch.empty()) throw InvariantError("make_input: empty batch");
  const std::size_t nb = batch.size(), k = batch[0].audio.rows(), dim = batch[0].audio.cols();
  const std::size_t joints = batch[0].shifted.cols();
  model::ModelInput<T> in;
  in.audio = ad::Tensor<T>({nb, k, dim});
  in.shifted_poses = ad::Tensor<T>({nb, k, joints});
  auto audio = in.audio.data();
  auto shifted = in.shifted_poses.data();
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& w = batch[b];
    if (w.audio.rows() != k || w.audio.cols() != dim) throw StructuralError("make_input: ragged batch");
    for (std::size_t i = 0; i < k * dim; ++i) audio[b * k * dim + i] = static_cast<T>(w.audio.data()[i]);
    for (std::size_t i = 0; i < k * joints; ++i) shifted[b * k * joints + i] = static_cast<T>(w.shifted.data()[i]);
    in.valid_len.push_back(w.valid_len);
    for (std::size_t i = 0; i < k; ++i) {
      in.audio_positions.push_back(w.start + i + 1);
      in.pose_positions.push_back(i == 0 ? 0 : w.start + i);
    }
  }
  return in;
}

template <typename T>
ad::Tensor<T> make_targets(std::span<const TrainingWindow> batch) {
  if (batch.empty()) throw InvariantError("make_targets: empty batch");
  const std::size_t nb = batch.size(), k = batch[0].target.rows(), joints = batch[0].target.cols();
  ad::Tensor<T> t({nb, k, joints});
  auto out = t.data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = 0; i < k * joints; ++i) out[b * k * joints + i] = static_cast<T>(batch[b].target.data()[i]);
  }
  return t;
}

template <typename T>
ad::Tensor<T> l2_loss(const ad::Tensor<T>& predicted, const ad::Tensor<T>& target,
                      const std::vector<std::size_t>& valid_len) {
  if (predicted.shape() != target.shape() || predicted.rank() != 3) {
    throw StructuralError("l2_loss: predicted " + ad::to_string(predicted.shape()) + " vs target " +
                          ad::to_string(target.shape()));
  }
  const std::size_t nb = predicted.dim(0), k = predicted.dim(1), joints = predicted.dim(2);
  if (valid_len.size() != nb) throw StructuralError("l2_loss: one valid length per batch row required");
  ad::Tensor<T> mask({nb, k, 1});
  std::size_t total = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    if (valid_len[b] == 0 || valid_len[b] > k) throw InvariantError("l2_loss: valid length must be in [1, K]");
    for (std::size_t i = 0; i < valid_len[b]; ++i) mask[b * k + i] = T(1);
    total += valid_len[b] * joints;
  }
  // Zero the padded differences before squaring so arbitrary padded targets cannot leak in.
  const auto diff = ad::mul(ad::sub(predicted, target), mask);
  return ad::scale(ad::sum(ad::mul(diff, diff)), static_cast<T>(1.0 / static_cast<double>(total)));
}

template model::ModelInput<float> make_input<float>(std::span<const TrainingWindow>);
template model::ModelInput<double> make_input<double>(std::span<const TrainingWindow>);
template ad::Tensor<float> make_targets<float>(std::span<const TrainingWindow>);
template ad::Tensor<double> make_targets<double>(std::span<const TrainingWindow>);
template ad::Tensor<float> l2_loss(const ad::Tensor<float>&, const ad::Tensor<float>&,
                                   const std::vector<std::size_t>&);
template ad::Tensor<double> l2_loss(const ad::Tensor<double>&, const ad::Tensor<double>&,
                                    const std::vector<std::size_t>&);

}  // namespace mdl::train
