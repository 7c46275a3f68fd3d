#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mdn/tape.hpp"
#include "mdn/tensor.hpp"

namespace mdn {

inline constexpr int kJointCount = 22;
inline constexpr int kMarkerCount = 43;
inline constexpr int kPointCount = kJointCount + kMarkerCount;  // 65
inline constexpr int kShapeDim = 10;
inline constexpr int kPoseDim = 3 * (kJointCount - 1);            // 63
inline constexpr int kStateDim = 2 * (3 + 3 + kPoseDim);          // 138
inline constexpr int kObsDim = 3 * kPointCount;                   // 195

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double k) const { return {k * x, k * y, k * z}; }
  double norm() const;
  double norm2() const { return x * x + y * y + z * z; }
};

struct Mat3 {
  std::array<double, 9> m{};  // row-major

  static Mat3 identity();
  Mat3 operator*(const Mat3& o) const;
  Vec3 operator*(const Vec3& v) const;
  Mat3 transposed() const;
};

// Axis-angle to rotation matrix; series expansion below angle^2 = 1e-8 keeps
// the map smooth through zero.
Mat3 rodrigues(const Vec3& w);

// Inverse of rodrigues: axis-angle with angle in [0, pi]. The input must be a
// rotation matrix; near angle pi the axis sign is chosen deterministically.
Vec3 rotation_log(const Mat3& R);

struct BodyShape {
  std::array<double, kShapeDim> beta{};
};

// Articulated surrogate body: 22 joints in a fixed hierarchy plus 43 surface
// markers rigidly attached to segments with fixed local offsets. Bone lengths
// scale linearly with the shape coefficients.
struct KinematicTree {
  std::array<int, kJointCount> parent;
  std::array<Vec3, kJointCount> rest_offset;
  struct Marker {
    int segment;
    Vec3 offset;
  };
  std::array<Marker, kMarkerCount> markers;
  std::array<std::array<double, kShapeDim>, kJointCount> shape_blend;

  static const KinematicTree& human22();
};

// clamp(1 + blend * beta, 0.5, 2.0) per bone.
std::array<double, kJointCount> shape_to_bone_scales(const BodyShape& shape);

// One frame of raw motion parameters: global translation, root orientation
// and 21 joint rotations, all axis-angle.
struct RawFrame {
  Vec3 trans;
  Vec3 root_orient;
  std::array<Vec3, kJointCount - 1> pose;
};

// Full kinematic state: positions plus per-frame velocity deltas, packed as
// [r, r_dot, phi, phi_dot, theta, theta_dot] -> 138 dims.
struct PoseState {
  Vec3 r, r_dot, phi, phi_dot;
  std::array<Vec3, kJointCount - 1> theta{}, theta_dot{};

  Tensor to_vec() const;
  static PoseState from_vec(const Tensor& t);
};

// 22 joint centers followed by 43 marker positions -> 195 dims.
struct Observation3D {
  std::array<Vec3, kJointCount> joints{};
  std::array<Vec3, kMarkerCount> markers{};

  Tensor to_vec() const;
  static Observation3D from_vec(const Tensor& t);
};

Observation3D forward_kinematics(const PoseState& state, const BodyShape& shape);

// Velocities as per-frame deltas; frame 0 gets zeros. fps rides along in the
// sequence types and does not enter the deltas.
std::vector<PoseState> compute_velocities(const std::vector<RawFrame>& frames);

// Adds N(0, sigma^2) noise to every rotation coordinate; translations are
// never touched. corrupt_root toggles noise on the root orientation.
std::vector<RawFrame> inject_pose_noise(const std::vector<RawFrame>& frames, double sigma,
                                        std::uint64_t seed, bool corrupt_root = true);

// Differentiable counterparts used inside training losses and the fitter.
Var rodrigues_var(Var w3);                                   // {3} -> {3,3}
Var fk_obs_var(Var state138, const BodyShape& shape);        // -> {195}
// Joint positions only, with the body pose held fixed as rotation matrices.
// When pre_rotation is given the root orientation becomes R(phi3) * pre,
// letting phi3 act as an increment on a baked-in base rotation.
Var fk_joints_var(Var r3, Var phi3,
                  const std::array<Mat3, kJointCount - 1>& local_rot,
                  const BodyShape& shape,
                  const Mat3* pre_rotation = nullptr);       // -> {66}

}  // namespace mdn
