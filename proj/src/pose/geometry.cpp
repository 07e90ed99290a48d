#include "mdl/pose/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mdl/binary_io.hpp"
#include "mdl/error.hpp"

namespace mdl::pose {

namespace {

constexpr double kUnitTolerance = 1e-9;

Mat3 skew(const Vec3& v) {
  Mat3 k;
  k << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return k;
}

// Basis vector along which v has the smallest absolute component.
Vec3 least_aligned_basis(const Vec3& v) {
  Eigen::Index i;
  v.cwiseAbs().minCoeff(&i);
  return Vec3::Unit(i);
}

Vec3 unit(const Vec3& v, const char* what) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvariantError(std::string("zero-length segment: ") + what);
  return v / n;
}

Keypoints rotate_about(const Keypoints& k, const Mat3& r, const Vec3& pivot) {
  Keypoints out = k;
  out.transform_points([&](const Vec3& p) -> Vec3 { return pivot + r * (p - pivot); });
  return out;
}

}  // namespace

void validate(const Keypoints& k) {
  for (const auto& p : k.points()) {
    if (!p.allFinite()) throw InvariantError("keypoint has non-finite coordinates");
  }
  if (k.left_shoulder == k.right_shoulder) throw InvariantError("left and right shoulders coincide");
  if (k.right_shoulder == k.elbow) throw InvariantError("shoulder and elbow coincide");
  if (k.elbow == k.wrist) throw InvariantError("elbow and wrist coincide");
  if (k.wrist == k.index_tip) throw InvariantError("wrist and index tip coincide");
}

Mat3 rotation_between(const Vec3& a, const Vec3& b) {
  if (std::abs(a.norm() - 1.0) > kUnitTolerance || std::abs(b.norm() - 1.0) > kUnitTolerance) {
    throw InvariantError("rotation_between: inputs must be unit vectors");
  }
  const double c = a.dot(b);
  if (c >= 0.0) {
    const Vec3 v = a.cross(b);
    if (v.isZero(0.0)) return Mat3::Identity();
    const Mat3 k = skew(v);
    return Mat3::Identity() + k + k * k / (1.0 + c);
  }
  // Obtuse case: turn a onto -b (well conditioned), then half-turn about an
  // axis orthogonal to b. For exact antipodes b = -a, so the axis is also the
  // normalized cross product of a with its least-aligned basis vector.
  const Vec3 n = b.cross(least_aligned_basis(b)).normalized();
  const Mat3 half_turn = 2.0 * n * n.transpose() - Mat3::Identity();
  return half_turn * rotation_between(a, -b);
}

Keypoints align_shoulders(const Keypoints& k) {
  validate(k);
  const Vec3 s = unit(k.left_shoulder - k.right_shoulder, "shoulders");
  Vec3 level(s.x(), 0.0, s.z());
  const double ln = level.norm();
  level = ln < 1e-12 ? kLateral : Vec3(level / ln);
  const Mat3 r = rotation_between(s, level);
  if (r == Mat3::Identity()) return k;
  return rotate_about(k, r, k.pelvis);
}

Keypoints align_spine(const Keypoints& k) {
  validate(k);
  const Vec3 mid = 0.5 * (k.left_shoulder + k.right_shoulder);
  const Vec3 spine = k.pelvis - mid;
  if (!(spine.norm() > 0.0)) throw InvariantError("pelvis coincides with shoulder midpoint");
  const Mat3 r = rotation_between(spine.normalized(), -kVertical);
  if (r == Mat3::Identity()) return k;
  return rotate_about(k, r, mid);
}

// The spine rotation keeps the shoulders level whenever the pelvis is
// equidistant from both shoulders; otherwise a last shoulder pass removes the
// residual tilt and the spine keeps whatever lean that leaves.
Keypoints align(const Keypoints& k) { return align_shoulders(align_spine(align_shoulders(k))); }

double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

JointPose joint_angles(const Keypoints& k) {
  validate(k);
  const Vec3 upper = unit(k.elbow - k.right_shoulder, "shoulder-elbow");
  const Vec3 fore = unit(k.wrist - k.elbow, "elbow-wrist");
  const Vec3 hand = unit(k.index_tip - k.wrist, "wrist-index");
  JointPose p;
  p.q = {angle_between(upper, kVertical), angle_between(upper, kOutward), angle_between(upper, fore),
         angle_between(fore, hand)};
  p.timestamp = k.timestamp;
  return p;
}

JointPose keypoints_to_pose(const Keypoints& k) { return joint_angles(align(k)); }

Keypoints parse_keypoints_line(std::string_view line) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("keypoints: invalid JSON: ") + e.what());
  }
  auto vec = [&](const char* key) -> Vec3 {
    const auto& pts = j.at("pts");
    if (!pts.contains(key)) throw InputError(std::string("keypoints: missing point \"") + key + "\"");
    const auto& a = pts.at(key);
    if (!a.is_array() || a.size() != 3) throw InputError(std::string("keypoints: \"") + key + "\" must be [x,y,z]");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  };
  try {
    if (!j.contains("t") || !j.contains("pts")) throw InputError("keypoints: need \"t\" and \"pts\"");
    Keypoints k;
    k.timestamp = j.at("t").get<double>();
    k.left_shoulder = vec("ls");
    k.right_shoulder = vec("rs");
    k.elbow = vec("el");
    k.wrist = vec("wr");
    k.index_tip = vec("ix");
    k.pelvis = vec("pv");
    return k;
  } catch (const json::exception& e) {
    throw InputError(std::string("keypoints: ") + e.what());
  }
}

std::string format_keypoints_line(const Keypoints& k) {
  using nlohmann::json;
  auto arr = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  json j;
  j["t"] = k.timestamp;
  j["pts"] = {{"ls", arr(k.left_shoulder)}, {"rs", arr(k.right_shoulder)}, {"el", arr(k.elbow)},
              {"wr", arr(k.wrist)},         {"ix", arr(k.index_tip)},      {"pv", arr(k.pelvis)}};
  return j.dump();
}

std::vector<Keypoints> load_keypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path.string());
  std::vector<Keypoints> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_keypoints_line(line));
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_keypoints(const std::filesystem::path& path, std::span<const Keypoints> frames) {
  std::string text;
  for (const auto& k : frames) {
    text += format_keypoints_line(k);
    text += '\n';
  }
  io::write_text_file(path, text);
}

std::vector<std::uint8_t> encode_pose_file(std::span<const JointPose> poses) {
  io::ByteWriter w;
  w.put_magic("MDLP");
  w.put(kPoseFileVersion);
  w.put(static_cast<std::uint32_t>(poses.size()));
  for (const auto& p : poses) {
    w.put(p.timestamp);
    for (double q : p.q) w.put(static_cast<float>(q));
  }
  return w.release();
}

std::vector<JointPose> decode_pose_file(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("MDLP");
  const std::size_t version_at = r.offset();
  if (r.get<std::uint32_t>() != kPoseFileVersion) throw DecodeError("unsupported MDLP version", version_at);
  const auto count = r.get<std::uint32_t>();
  std::vector<JointPose> poses(count);
  for (auto& p : poses) {
    p.timestamp = r.get<double>();
    for (double& q : p.q) q = r.get<float>();
  }
  return poses;
}

void save_pose_file(const std::filesystem::path& path, std::span<const JointPose> poses) {
  io::write_file(path, encode_pose_file(poses));
}

std::vector<JointPose> load_pose_file(const std::filesystem::path& path) {
  return io::decode_file(path, [](auto bytes) { return decode_pose_file(bytes); });
}

}  // namespace mdl::pose
