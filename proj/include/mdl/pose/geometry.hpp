#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mdl::pose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Body frame conventions after alignment.
inline const Vec3 kVertical{0.0, 1.0, 0.0};
inline const Vec3 kOutward{0.0, 0.0, 1.0};
inline const Vec3 kLateral{1.0, 0.0, 0.0};

// Arm chain is the right arm: right shoulder -> elbow -> wrist -> index tip.
struct Keypoints {
  Vec3 left_shoulder = Vec3::Zero();
  Vec3 right_shoulder = Vec3::Zero();
  Vec3 elbow = Vec3::Zero();
  Vec3 wrist = Vec3::Zero();
  Vec3 index_tip = Vec3::Zero();
  Vec3 pelvis = Vec3::Zero();
  double timestamp = 0.0;

  static constexpr std::size_t kPoints = 6;
  std::array<Vec3, kPoints> points() const {
    return {left_shoulder, right_shoulder, elbow, wrist, index_tip, pelvis};
  }
  template <typename F>
  void transform_points(F&& f) {
    for (Vec3* p : {&left_shoulder, &right_shoulder, &elbow, &wrist, &index_tip, &pelvis}) *p = f(*p);
  }
};

// Four joint angles in radians, each within [-pi, pi].
struct JointPose {
  std::array<double, 4> q{0.0, 0.0, 0.0, 0.0};
  double timestamp = 0.0;

  bool operator==(const JointPose&) const = default;
};

// Throws InvariantError on non-finite coordinates or coincident chain points.
void validate(const Keypoints& k);

// Proper rotation taking unit vector a onto unit vector b.
Mat3 rotation_between(const Vec3& a, const Vec3& b);

// Rotates all points about the pelvis so the right->left shoulder direction
// has no vertical component.
Keypoints align_shoulders(const Keypoints& k);

// Rotates all points about the shoulder midpoint so the midpoint->pelvis
// direction points straight down.
Keypoints align_spine(const Keypoints& k);

// align_shoulders(align_spine(align_shoulders(k))).
Keypoints align(const Keypoints& k);

// Unsigned angle between two vectors, atan2(|a x b|, a.b) in [0, pi].
double angle_between(const Vec3& a, const Vec3& b);

// q1 = angle(upper arm, vertical), q2 = angle(upper arm, outward),
// q3 = angle(upper arm, forearm), q4 = angle(forearm, hand).
// Expects already-aligned keypoints.
JointPose joint_angles(const Keypoints& k);

// Full conversion: align then measure.
JointPose keypoints_to_pose(const Keypoints& k);

// Keypoints JSON-lines: {"t": s, "pts": {"ls":[x,y,z], "rs":..., "el":..., "wr":..., "ix":..., "pv":...}}
Keypoints parse_keypoints_line(std::string_view line);
std::string format_keypoints_line(const Keypoints& k);
std::vector<Keypoints> load_keypoints(const std::filesystem::path& path);
void save_keypoints(const std::filesystem::path& path, std::span<const Keypoints> frames);

// MDLP: magic, u32 version, u32 count, count x (f64 t, 4 x f32 angles).
inline constexpr std::uint32_t kPoseFileVersion = 1;
std::vector<std::uint8_t> encode_pose_file(std::span<const JointPose> poses);
std::vector<JointPose> decode_pose_file(std::span<const std::uint8_t> bytes);
void save_pose_file(const std::filesystem::path& path, std::span<const JointPose> poses);
std::vector<JointPose> load_pose_file(const std::filesystem::path& path);

}  // namespace mdl::pose
