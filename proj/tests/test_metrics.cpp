#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mdl/eval/metrics.hpp"
#include "mdl/model/transformer.hpp"
#include "mdl/model/mamba.hpp"

using namespace mdl;
using namespace mdl::eval;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<pose::JointPose> constant_poses(std::size_t n, double v) {
  std::vector<pose::JointPose> out(n);
  for (auto& p : out) p.q = {v, v, v, v};
  return out;
}

MatrixXd gaussian_samples(std::mt19937_64& rng, std::size_t n, const VectorXd& mean, const MatrixXd& chol) {
  std::normal_distribution<double> g;
  MatrixXd out(n, mean.size());
  for (std::size_t i = 0; i < n; ++i) {
    VectorXd z(mean.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = g(rng);
    out.row(i) = (mean + chol * z).transpose();
  }
  return out;
}

model::ModelConfig mini(model::Variant v) {
  model::ModelConfig c;
  c.variant = v;
  c.layers = 1;
  c.embed_dim = 8;
  c.heads = 2;
  c.ff_dim = 16;
  c.dropout = 0.0;
  c.window = 5;
  c.position_vocab = 40;
  c.state_size = 4;
  c.feature_dim = audio::kFeatureDim;
  return c;
}

audio::FeatureStream random_features(std::mt19937_64& rng, std::size_t frames) {
  audio::FeatureStream f{RowMatrix<float>(frames, audio::kFeatureDim)};
  for (auto& v : f.values.data()) v = static_cast<float>(0.1 + 0.8 * ad::uniform01(rng));
  return f;
}

}  // namespace

TEST_CASE("aje: identical, constant offset, errors") {
  const auto a = constant_poses(10, 1.0);
  CHECK(aje(a, a) == 0.0);
  CHECK(aje(constant_poses(10, kPi / 2.0), constant_poses(10, 0.0)) == kPi / 2.0);
  CHECK_THROWS_AS(aje(constant_poses(3, 0.0), a), StructuralError);
  CHECK_THROWS_AS(aje({}, {}), StructuralError);
}

TEST_CASE("aje of uniform random predictions is about 2 pi / 3") {
  // E|U - V| for independent U, V ~ U[-pi, pi] is 2 pi / 3.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  std::vector<pose::JointPose> a(50000), b(50000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int j = 0; j < 4; ++j) {
      a[i].q[j] = u(rng);
      b[i].q[j] = u(rng);
    }
  }
  CHECK(aje(a, b) == doctest::Approx(2.0 * kPi / 3.0).epsilon(0.01));
}

TEST_CASE("frechet distance: analytic cases") {
  GaussianSummary a{VectorXd::Zero(3), MatrixXd::Identity(3, 3)};
  CHECK(std::abs(frechet_distance(a, a)) < 1e-12);

  const VectorXd v = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  GaussianSummary shifted{v, MatrixXd::Identity(3, 3)};
  CHECK(frechet_distance(a, shifted) == doctest::Approx(v.squaredNorm()).epsilon(1e-12));

  // I vs 4I in 4 dimensions: Tr(I + 4I - 2*2I) = 4.
  GaussianSummary i4{VectorXd::Zero(4), MatrixXd::Identity(4, 4)};
  GaussianSummary four{VectorXd::Zero(4), 4.0 * MatrixXd::Identity(4, 4)};
  CHECK(std::abs(frechet_distance(i4, four) - 4.0) < 1e-6);
  CHECK(std::abs(frechet_distance(four, i4) - 4.0) < 1e-6);
}

TEST_CASE("frechet distance: symmetry, non-negativity, sample order") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd l1 = MatrixXd::Random(4, 4), l2 = MatrixXd::Random(4, 4);
    const auto x = gaussian_samples(rng, 200, VectorXd::Random(4), l1);
    const auto y = gaussian_samples(rng, 150, VectorXd::Random(4), l2);
    const double d = frechet_distance(x, y);
    CHECK(d >= 0.0);
    CHECK(frechet_distance(y, x) == doctest::Approx(d).epsilon(1e-8));
    MatrixXd reversed = x.colwise().reverse();
    CHECK(frechet_distance(reversed, y) == doctest::Approx(d).epsilon(1e-10));
  }
}

TEST_CASE("summary statistics match direct formulas") {
  MatrixXd x(4, 2);
  x << 1, 2, 3, 4, 5, 0, 7, 2;
  const auto s = summarize(x);
  CHECK(s.mean[0] == 4.0);
  CHECK(s.mean[1] == 2.0);
  // Unbiased: sum of squared deviations / (n - 1).
  CHECK(s.covariance(0, 0) == doctest::Approx((9 + 1 + 1 + 9) / 3.0));
  CHECK(s.covariance(0, 1) == doctest::Approx((-3 * 0 + -1 * 2 + 1 * -2 + 3 * 0) / 3.0));
  CHECK_THROWS_AS(summarize(MatrixXd(2, 2)), InvariantError);
}

TEST_CASE("sqrt_psd reconstructs and clamps") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd a = MatrixXd::Random(5, 5);
    const MatrixXd m = a * a.transpose();
    const MatrixXd r = sqrt_psd(m);
    CHECK((r * r - m).norm() < 1e-9 * std::max(1.0, m.norm()));
    CHECK((r - r.transpose()).norm() < 1e-12);
  }
  MatrixXd neg = MatrixXd::Zero(2, 2);
  neg(0, 0) = 4.0;
  neg(1, 1) = -1e-10;
  const MatrixXd r = sqrt_psd(neg);
  CHECK(r(0, 0) == doctest::Approx(2.0));
  CHECK(r(1, 1) == 0.0);
}

TEST_CASE("motion vectors: angles and velocities from t >= 1") {
  std::vector<pose::JointPose> s(3);
  for (std::size_t t = 0; t < 3; ++t) s[t].q = {double(t), 2.0 * t, 0.0, 1.0};
  const std::vector<std::vector<pose::JointPose>> seqs{s, s};
  const auto m = motion_vectors(seqs);
  CHECK(m.rows() == 4);
  CHECK(m.cols() == 8);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 4) == 1.0);
  CHECK(m(0, 5) == 2.0);
  CHECK(m(1, 1) == 4.0);
}

TEST_CASE("score: per-song AJE, population std, order independence") {
  std::vector<data::PairSequence> truth(3);
  std::vector<std::vector<pose::JointPose>> gen(3);
  for (std::size_t i = 0; i < 3; ++i) {
    truth[i].song_id = "song-" + std::to_string(2 - i);
    truth[i].poses = constant_poses(20, 0.0);
    for (std::size_t t = 0; t < 20; ++t) truth[i].poses[t].q[0] = 0.1 * t;
    gen[i] = truth[i].poses;
    for (auto& p : gen[i]) p.q[1] += 0.4 * (i + 1);
  }
  const auto r = score(truth, gen);
  REQUIRE(r.songs.size() == 3);
  CHECK(r.songs[0].song_id == "song-0");
  CHECK(r.songs[0].aje == doctest::Approx(0.3));
  CHECK(r.aje_mean == doctest::Approx(0.2));
  CHECK(r.aje_std == doctest::Approx(std::sqrt((0.01 + 0.0 + 0.01) / 3.0)));
  CHECK(r.fid >= 0.0);

  std::vector<data::PairSequence> t2{truth[2], truth[0], truth[1]};
  std::vector<std::vector<pose::JointPose>> g2{gen[2], gen[0], gen[1]};
  const auto r2 = score(t2, g2);
  CHECK(r2.to_json() == r.to_json());
  const auto j = r.to_json();
  CHECK(j["aggregate"]["aje_mean"].get<double>() == r.aje_mean);
  CHECK(j["song-1"]["frames"] == 20);
}

TEST_CASE("translate: length, range, prefix causality and determinism") {
  std::mt19937_64 rng(4);
  const auto f = random_features(rng, 30);
  for (auto v : {model::Variant::kTransformer, model::Variant::kMamba}) {
    const auto m = model::make_model<double>(mini(v), 3);
    const auto poses = translate(*m, f);
    CHECK(poses.size() == 30);
    for (const auto& p : poses) {
      for (double q : p.q) CHECK(std::abs(q) <= kPi);
    }
    CHECK(poses[7].timestamp == audio::frame_timestamp(7));
    audio::FeatureStream head{RowMatrix<float>(
        12, audio::kFeatureDim,
        std::vector<float>(f.values.data().begin(), f.values.data().begin() + 12 * audio::kFeatureDim))};
    const auto prefix = translate(*m, head);
    for (std::size_t t = 0; t < 12; ++t) CHECK(prefix[t] == poses[t]);
    CHECK(translate(*m, f) == poses);
  }
}

TEST_CASE("evaluate_split: worker count does not change the report") {
  std::mt19937_64 rng(5);
  std::vector<data::PairSequence> songs;
  for (int i = 0; i < 3; ++i) {
    data::PairSequence s;
    s.song_id = "s" + std::to_string(i);
    s.features = random_features(rng, 15 + 5 * i);
    s.poses = constant_poses(s.features.frames(), 1.0);
    songs.push_back(std::move(s));
  }
  const auto m = model::make_model<float>(mini(model::Variant::kMamba), 8);
  std::vector<std::vector<pose::JointPose>> generated;
  const auto one = evaluate_split(*m, songs, 1, &generated);
  const auto three = evaluate_split(*m, songs, 3);
  CHECK(one.to_json() == three.to_json());
  CHECK(generated.size() == 3);
  CHECK(generated[2].size() == 25);
}
