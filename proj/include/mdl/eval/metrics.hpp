#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mdl/audio/features.hpp"
#include "mdl/data/dataset.hpp"
#include "mdl/model/sequence_model.hpp"
#include "mdl/pose/geometry.hpp"

namespace mdl::eval {

// Autoregressive generation over a normalized feature stream. Frame t sees
// the K-window ending at t built from the features and the poses generated
// so far; the prediction at the last valid slot becomes pose t. Dropout off.
template <typename T>
std::vector<pose::JointPose> translate(const model::SequenceModel<T>& model, const audio::FeatureStream& features);

// Mean |q_gen - q_gt| over all frames and joints, no angular wrap.
// Throws StructuralError on length mismatch or empty input.
double aje(std::span<const pose::JointPose> generated, std::span<const pose::JointPose> truth);

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased
};

// Rows are samples. Throws InvariantError with fewer than dim + 1 rows.
GaussianSummary summarize(const Eigen::MatrixXd& samples);

// Symmetric PSD square root by eigendecomposition, negative eigenvalues clamped to 0.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m);

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// 8-dim rows (4 angles, 4 frame-to-frame velocities) for frames t >= 1 of
// each sequence, pooled.
Eigen::MatrixXd motion_vectors(std::span<const std::vector<pose::JointPose>> sequences);

struct SongResult {
  std::string song_id;
  double aje = 0.0;
  std::size_t frames = 0;
};

struct EvaluationReport {
  std::vector<SongResult> songs;  // sorted by id
  double aje_mean = 0.0;
  double aje_std = 0.0;  // population
  double fid = 0.0;

  // {song_id: {aje, frames}, ..., "aggregate": {aje_mean, aje_std, fid}}
  nlohmann::json to_json() const;
};

// Scores generated sequences against the paired ground truth. Order independent.
EvaluationReport score(std::span<const data::PairSequence> truth,
                       std::span<const std::vector<pose::JointPose>> generated);

// Translates every song (features already normalized) and scores it; `jobs`
// songs are translated concurrently.
template <typename T>
EvaluationReport evaluate_split(const model::SequenceModel<T>& model, std::span<const data::PairSequence> songs,
                                std::size_t jobs = 1, std::vector<std::vector<pose::JointPose>>* generated = nullptr);

}  // namespace mdl::eval
