#include "mdl/eval/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <Eigen/Eigenvalues>

#include "mdl/train/window.hpp"

namespace mdl::eval {

template <typename T>
std::vector<pose::JointPose> translate(const model::SequenceModel<T>& model, const audio::FeatureStream& features) {
  const auto& cfg = model.config();
  if (features.values.cols() != cfg.feature_dim) {
    throw StructuralError("translate: feature dimension " + std::to_string(features.values.cols()) +
                          ", model expects " + std::to_string(cfg.feature_dim));
  }
  ad::NoGradGuard no_grad;
  std::vector<pose::JointPose> out;
  out.reserve(features.frames());
  for (std::size_t t = 0; t < features.frames(); ++t) {
    const auto w = train::make_window(features, out, t, cfg.window);
    const auto y = model.forward(train::make_input<T>(std::span(&w, 1)), false, nullptr);
    pose::JointPose p;
    p.timestamp = audio::frame_timestamp(t);
    for (std::size_t j = 0; j < 4; ++j) p.q[j] = static_cast<double>(y[(w.valid_len - 1) * cfg.pose_dim + j]);
    out.push_back(p);
  }
  return out;
}

double aje(std::span<const pose::JointPose> generated, std::span<const pose::JointPose> truth) {
  if (generated.size() != truth.size()) {
    throw StructuralError("aje: " + std::to_string(generated.size()) + " generated vs " +
                          std::to_string(truth.size()) + " reference frames");
  }
  if (generated.empty()) throw StructuralError("aje: empty sequences");
  // Extended accumulator: a constant offset averages back to itself exactly.
  long double total = 0.0L;
  for (std::size_t t = 0; t < generated.size(); ++t) {
    for (std::size_t j = 0; j < 4; ++j) total += std::abs(generated[t].q[j] - truth[t].q[j]);
  }
  return static_cast<double>(total / static_cast<long double>(4 * generated.size()));
}

GaussianSummary summarize(const Eigen::MatrixXd& samples) {
  const auto n = samples.rows(), d = samples.cols();
  if (n < d + 1) {
    throw InvariantError("summarize: " + std::to_string(n) + " samples for dimension " + std::to_string(d) +
                         ", need at least " + std::to_string(d + 1));
  }
  GaussianSummary g;
  g.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return g;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw InvariantError("sqrt_psd: eigendecomposition failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size()) throw StructuralError("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd root_a = sqrt_psd(a.covariance);
  const Eigen::MatrixXd cross = sqrt_psd(root_a * b.covariance * root_a);
  const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
  return std::max(0.0, d);
}

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return frechet_distance(summarize(a), summarize(b));
}

Eigen::MatrixXd motion_vectors(std::span<const std::vector<pose::JointPose>> sequences) {
  Eigen::Index rows = 0;
  for (const auto& s : sequences) rows += s.empty() ? 0 : static_cast<Eigen::Index>(s.size() - 1);
  Eigen::MatrixXd out(rows, 8);
  Eigen::Index r = 0;
  for (const auto& s : sequences) {
    for (std::size_t t = 1; t < s.size(); ++t, ++r) {
      for (std::size_t j = 0; j < 4; ++j) {
        out(r, static_cast<Eigen::Index>(j)) = s[t].q[j];
        out(r, static_cast<Eigen::Index>(4 + j)) = s[t].q[j] - s[t - 1].q[j];
      }
    }
  }
  return out;
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& s : songs) j[s.song_id] = {{"aje", s.aje}, {"frames", s.frames}};
  j["aggregate"] = {{"aje_mean", aje_mean}, {"aje_std", aje_std}, {"fid", fid}};
  return j;
}

EvaluationReport score(std::span<const data::PairSequence> truth,
                       std::span<const std::vector<pose::JointPose>> generated) {
  if (truth.size() != generated.size()) throw StructuralError("score: one generated sequence per song required");
  if (truth.empty()) throw InvariantError("score: no songs");
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return truth[a].song_id < truth[b].song_id; });

  EvaluationReport r;
  std::vector<std::vector<pose::JointPose>> gen_sorted, gt_sorted;
  for (auto i : order) {
    r.songs.push_back({truth[i].song_id, aje(generated[i], truth[i].poses), truth[i].frames()});
    gen_sorted.push_back(generated[i]);
    gt_sorted.push_back(truth[i].poses);
  }
  double sum = 0.0;
  for (const auto& s : r.songs) sum += s.aje;
  r.aje_mean = sum / static_cast<double>(r.songs.size());
  double var = 0.0;
  for (const auto& s : r.songs) var += (s.aje - r.aje_mean) * (s.aje - r.aje_mean);
  r.aje_std = std::sqrt(var / static_cast<double>(r.songs.size()));
  r.fid = frechet_distance(motion_vectors(gen_sorted), motion_vectors(gt_sorted));
  return r;
}

template <typename T>
EvaluationReport evaluate_split(const model::SequenceModel<T>& model, std::span<const data::PairSequence> songs,
                                std::size_t jobs, std::vector<std::vector<pose::JointPose>>* generated) {
  std::vector<std::vector<pose::JointPose>> out(songs.size());
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, songs.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < songs.size(); ++i) out[i] = translate(model, songs[i].features);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < songs.size(); i = next++) {
          try {
            out[i] = translate(model, songs[i].features);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  auto report = score(songs, out);
  if (generated) *generated = std::move(out);
  return report;
}

template std::vector<pose::JointPose> translate(const model::SequenceModel<float>&, const audio::FeatureStream&);
template std::vector<pose::JointPose> translate(const model::SequenceModel<double>&, const audio::FeatureStream&);
template EvaluationReport evaluate_split(const model::SequenceModel<float>&, std::span<const data::PairSequence>,
                                         std::size_t, std::vector<std::vector<pose::JointPose>>*);
template EvaluationReport evaluate_split(const model::SequenceModel<double>&, std::span<const data::PairSequence>,
                                         std::size_t, std::vector<std::vector<pose::JointPose>>*);

}  // namespace mdl::eval
