#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "mdl/error.hpp"
#include "mdl/pose/geometry.hpp"

using namespace mdl;
using namespace mdl::pose;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_vec(std::mt19937_64& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  return {u(rng), u(rng), u(rng)};
}

Keypoints random_pose(std::mt19937_64& rng) {
  Keypoints k;
  k.pelvis = random_vec(rng);
  k.left_shoulder = k.pelvis + Vec3(0.2, 0.5, 0.0) + random_vec(rng, 0.15);
  k.right_shoulder = k.pelvis + Vec3(-0.2, 0.5, 0.0) + random_vec(rng, 0.15);
  k.elbow = k.right_shoulder + random_vec(rng, 0.3);
  k.wrist = k.elbow + random_vec(rng, 0.3);
  k.index_tip = k.wrist + random_vec(rng, 0.1);
  return k;
}

double max_distance_change(const Keypoints& a, const Keypoints& b) {
  const auto pa = a.points(), pb = b.points();
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = i + 1; j < pa.size(); ++j) {
      worst = std::max(worst, std::abs((pa[i] - pa[j]).norm() - (pb[i] - pb[j]).norm()));
    }
  }
  return worst;
}

double max_point_diff(const Keypoints& a, const Keypoints& b) {
  const auto pa = a.points(), pb = b.points();
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, (pa[i] - pb[i]).cwiseAbs().maxCoeff());
  return worst;
}

Keypoints upright() {
  Keypoints k;
  k.left_shoulder = {0.2, 0.0, 0.0};
  k.right_shoulder = {-0.2, 0.0, 0.0};
  k.pelvis = {0.0, -0.5, 0.0};
  k.elbow = {-0.2, -0.3, 0.0};
  k.wrist = {-0.2, -0.55, 0.0};
  k.index_tip = {-0.2, -0.63, 0.0};
  return k;
}

}  // namespace

TEST_CASE("rotation_between: identity, quarter turn, antipodal, random") {
  const Vec3 x(1, 0, 0), y(0, 1, 0);
  CHECK((rotation_between(x, x) - Mat3::Identity()).norm() == 0.0);

  const Mat3 r = rotation_between(x, y);
  CHECK((r * x - y).norm() < 1e-15);
  CHECK((r * Vec3(0, 0, 1) - Vec3(0, 0, 1)).norm() < 1e-15);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a = random_vec(rng).normalized();
    const Vec3 b = i % 4 == 0 ? Vec3(-a) : random_vec(rng).normalized();
    const Mat3 m = rotation_between(a, b);
    CHECK((m * a - b).norm() < 1e-9);
    CHECK((m.transpose() * m - Mat3::Identity()).norm() < 1e-9);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("align_shoulders: level input unchanged, extreme tilt leveled") {
  const auto k = upright();
  CHECK(max_point_diff(align_shoulders(k), k) < 1e-12);

  auto tilted = k;
  tilted.left_shoulder = {0.0, 0.4, 0.0};
  tilted.right_shoulder = {0.0, 0.0, 0.0};
  const auto a = align_shoulders(tilted);
  CHECK(std::abs((a.left_shoulder - a.right_shoulder).y()) < 1e-12);
  CHECK(max_distance_change(a, tilted) < 1e-9);
  CHECK((a.pelvis - tilted.pelvis).norm() < 1e-12);
}

TEST_CASE("align_spine: vertical spine unchanged, forward lean straightened") {
  const auto k = upright();
  CHECK(max_point_diff(align_spine(k), k) < 1e-12);

  // Lean 45 degrees forward about the shoulder line.
  auto lean = k;
  const Eigen::AngleAxisd rot(kPi / 4.0, Vec3::UnitX());
  lean.transform_points([&](const Vec3& p) { return Vec3(rot * p); });
  const auto s = align_spine(lean);
  const Vec3 mid = 0.5 * (s.left_shoulder + s.right_shoulder);
  CHECK(((s.pelvis - mid).normalized() - Vec3(0, -1, 0)).norm() < 1e-9);
  CHECK(max_distance_change(s, lean) < 1e-9);
}

TEST_CASE("degenerate keypoints are invariant errors") {
  auto k = upright();
  k.left_shoulder = k.right_shoulder;
  CHECK_THROWS_AS(keypoints_to_pose(k), InvariantError);
  k = upright();
  k.pelvis = 0.5 * (k.left_shoulder + k.right_shoulder);
  CHECK_THROWS_AS(align_spine(k), InvariantError);
  k = upright();
  k.wrist = k.elbow;
  CHECK_THROWS_AS(joint_angles(k), InvariantError);
  k = upright();
  k.index_tip.x() = std::nan("");
  CHECK_THROWS_AS(keypoints_to_pose(k), InvariantError);
}

TEST_CASE("joint angles: collinear hanging arm is exactly (pi, pi/2, 0, 0)") {
  const auto q = keypoints_to_pose(upright()).q;
  CHECK(q[0] == kPi);
  CHECK(q[1] == kPi / 2.0);
  CHECK(q[2] == 0.0);
  CHECK(q[3] == 0.0);
}

TEST_CASE("joint angles: outward and perpendicular upper arm") {
  auto k = upright();
  k.elbow = k.right_shoulder + Vec3(0, 0, 0.3);
  k.wrist = k.elbow + Vec3(0, 0, 0.25);
  k.index_tip = k.wrist + Vec3(0, 0, 0.08);
  CHECK(joint_angles(k).q[1] == 0.0);
  k.elbow = k.right_shoulder + Vec3(-0.3, 0, 0);
  CHECK(joint_angles(k).q[1] == kPi / 2.0);
}

TEST_CASE("joint angles against an independent atan2 oracle") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto k = random_pose(rng);
    const Vec3 u1 = (k.elbow - k.right_shoulder).normalized();
    const Vec3 u2 = (k.wrist - k.elbow).normalized();
    const Vec3 u3 = (k.index_tip - k.wrist).normalized();
    const auto oracle = [](const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); };
    const auto q = joint_angles(k).q;
    CHECK(q[0] == doctest::Approx(oracle(u1, Vec3::UnitY())).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(oracle(u1, Vec3::UnitZ())).epsilon(1e-12));
    CHECK(q[2] == doctest::Approx(oracle(u1, u2)).epsilon(1e-12));
    CHECK(q[3] == doctest::Approx(oracle(u2, u3)).epsilon(1e-12));
  }
}

TEST_CASE("1000 random poses: range, invariances, rigidity, idempotence") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const auto k = random_pose(rng);
    const auto q = keypoints_to_pose(k).q;
    for (double a : q) {
      CHECK(a >= 0.0);
      CHECK(a <= kPi);
    }

    const Vec3 shift = random_vec(rng, 10.0);
    auto moved = k;
    moved.transform_points([&](const Vec3& p) { return Vec3(p + shift); });
    const auto aligned = align(k);
    auto aligned_moved = aligned;
    aligned_moved.transform_points([&](const Vec3& p) { return Vec3(p + shift); });
    const auto qa = joint_angles(aligned).q;
    const auto qam = joint_angles(aligned_moved).q;
    for (int j = 0; j < 4; ++j) CHECK(std::abs(qam[j] - qa[j]) < 1e-12);
    const auto qm = keypoints_to_pose(moved).q;
    for (int j = 0; j < 4; ++j) CHECK(std::abs(qm[j] - q[j]) < 1e-9);

    const double s = scale(rng);
    const Vec3 center = random_vec(rng, 3.0);
    auto scaled = k;
    scaled.transform_points([&](const Vec3& p) { return Vec3(center + s * (p - center)); });
    const auto qs = keypoints_to_pose(scaled).q;
    for (int j = 0; j < 4; ++j) CHECK(std::abs(qs[j] - q[j]) < 1e-9);

    const auto sh = align_shoulders(k);
    const auto sp = align_spine(sh);
    CHECK(max_distance_change(sh, k) < 1e-9);
    CHECK(max_distance_change(sp, k) < 1e-9);
    CHECK(max_distance_change(aligned, k) < 1e-9);
    CHECK(max_point_diff(align_shoulders(sh), sh) < 1e-9);
    CHECK(max_point_diff(align_spine(sp), sp) < 1e-9);
    CHECK(std::abs((aligned.left_shoulder - aligned.right_shoulder).normalized().y()) < 1e-9);
  }
}

TEST_CASE("translation by grid vectors leaves joint angles bit-identical") {
  // Coordinates on a 2^-24 grid translate without rounding, so each segment
  // vector, and everything computed from it, is reproduced exactly.
  auto grid = [](Vec3 p) { return Vec3((p * 0x1p24).array().round().matrix() * 0x1p-24); };
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    auto k = random_pose(rng);
    k.transform_points(grid);
    const Vec3 shift = grid(random_vec(rng, 10.0));
    auto moved = k;
    moved.transform_points([&](const Vec3& p) { return Vec3(p + shift); });
    CHECK(joint_angles(moved).q == joint_angles(k).q);
  }
}

TEST_CASE("keypoint lines and pose files round trip") {
  auto k = upright();
  k.timestamp = 1.25;
  const auto back = parse_keypoints_line(format_keypoints_line(k));
  CHECK(max_point_diff(back, k) == 0.0);
  CHECK(back.timestamp == 1.25);
  CHECK_THROWS_AS(parse_keypoints_line(R"({"t": 0, "pts": {"ls": [0, 0]}})"), InputError);
  CHECK_THROWS_AS(parse_keypoints_line("not json"), InputError);

  std::vector<JointPose> poses{{{0.5f, 1.0f, 1.5f, 2.0f}, 0.0}, {{-0.25f, 3.0f, 0.0f, 1.0f}, 1.0 / 60.0}};
  const auto decoded = decode_pose_file(encode_pose_file(poses));
  CHECK(decoded == poses);
  auto bytes = encode_pose_file(poses);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_pose_file(bytes), DecodeError);

  const auto dir = std::filesystem::temp_directory_path() / "mdl_test_geometry";
  std::filesystem::create_directories(dir);
  const std::vector<Keypoints> frames{k, upright()};
  save_keypoints(dir / "k.jsonl", frames);
  CHECK(load_keypoints(dir / "k.jsonl").size() == 2);
  std::filesystem::remove_all(dir);
}
