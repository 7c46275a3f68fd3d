#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

#include "mdn/kinematics.hpp"
#include "mdn/rng.hpp"
#include "test_util.hpp"

using namespace mdn;

namespace {

Eigen::Quaterniond quat_of(const Vec3& w) {
  double angle = w.norm();
  if (angle < 1e-12) return Eigen::Quaterniond::Identity();
  Eigen::Vector3d axis(w.x / angle, w.y / angle, w.z / angle);
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));
}

// Forward kinematics recomputed through quaternion composition.
std::array<Eigen::Vector3d, kJointCount> fk_quaternion_oracle(const PoseState& s,
                                                              const BodyShape& shape) {
  const KinematicTree& tree = KinematicTree::human22();
  auto scales = shape_to_bone_scales(shape);
  std::array<Eigen::Quaterniond, kJointCount> q;
  std::array<Eigen::Vector3d, kJointCount> p;
  q[0] = quat_of(s.phi);
  p[0] = Eigen::Vector3d(s.r.x, s.r.y, s.r.z);
  for (int j = 1; j < kJointCount; ++j) {
    int par = tree.parent[j];
    q[j] = q[par] * quat_of(s.theta[j - 1]);
    Vec3 o = tree.rest_offset[j] * scales[j];
    p[j] = p[par] + q[par] * Eigen::Vector3d(o.x, o.y, o.z);
  }
  return p;
}

PoseState random_state(std::uint64_t seed, double angle_range = 1.5) {
  Rng rng(seed);
  PoseState s;
  s.r = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  s.phi = {rng.uniform(-angle_range, angle_range), rng.uniform(-angle_range, angle_range),
           rng.uniform(-angle_range, angle_range)};
  for (auto& t : s.theta)
    t = {rng.uniform(-angle_range, angle_range), rng.uniform(-angle_range, angle_range),
         rng.uniform(-angle_range, angle_range)};
  return s;
}

BodyShape random_shape(std::uint64_t seed) {
  Rng rng(seed);
  BodyShape b;
  for (auto& x : b.beta) x = rng.uniform(-2, 2);
  return b;
}

}  // namespace

TEST_CASE("rodrigues of the zero vector is the identity") {
  Mat3 r = rodrigues({0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(r.m[3 * i + j] == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("rodrigues quarter turn about y sends x to -z") {
  Mat3 r = rodrigues({0, M_PI / 2, 0});
  Vec3 v = r * Vec3{1, 0, 0};
  CHECK(v.x == doctest::Approx(0).epsilon(1e-12));
  CHECK(v.y == doctest::Approx(0).epsilon(1e-12));
  CHECK(v.z == doctest::Approx(-1));
}

TEST_CASE("rodrigues matches the quaternion oracle on random axes") {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    Vec3 w{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    Mat3 r = rodrigues(w);
    Eigen::Matrix3d re = quat_of(w).toRotationMatrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(r.m[3 * i + j] == doctest::Approx(re(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("rodrigues series branch stays consistent near zero") {
  for (double a : {1e-5, 1e-4, 2e-4}) {
    Vec3 w{a, -0.5 * a, 0.25 * a};
    Mat3 r = rodrigues(w);
    Eigen::Matrix3d re = quat_of(w).toRotationMatrix();
    for (int i = 0; i < 9; ++i) CHECK(r.m[i] == doctest::Approx(re(i / 3, i % 3)).epsilon(1e-10));
  }
}

TEST_CASE("neutral shape gives unit bone scales and extreme shapes clamp") {
  BodyShape neutral;
  for (double s : shape_to_bone_scales(neutral)) CHECK(s == 1.0);

  BodyShape wild;
  for (auto& x : wild.beta) x = 1e6;
  for (double s : shape_to_bone_scales(wild)) {
    CHECK(s >= 0.5);
    CHECK(s <= 2.0);
  }
}

TEST_CASE("rest pose stacks joints by cumulative offsets") {
  PoseState rest;  // all zeros
  BodyShape neutral;
  Observation3D obs = forward_kinematics(rest, neutral);
  const KinematicTree& tree = KinematicTree::human22();
  for (int j = 0; j < kJointCount; ++j) {
    Vec3 expect{0, 0, 0};
    for (int k = j; k != -1; k = tree.parent[k]) expect = expect + tree.rest_offset[k];
    CHECK(obs.joints[j].x == doctest::Approx(expect.x));
    CHECK(obs.joints[j].y == doctest::Approx(expect.y));
    CHECK(obs.joints[j].z == doctest::Approx(expect.z));
  }
}

TEST_CASE("forward kinematics matches the quaternion-composition oracle") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    PoseState s = random_state(seed);
    BodyShape b = random_shape(seed + 100);
    Observation3D obs = forward_kinematics(s, b);
    auto oracle = fk_quaternion_oracle(s, b);
    for (int j = 0; j < kJointCount; ++j) {
      CHECK(obs.joints[j].x == doctest::Approx(oracle[j].x()).epsilon(1e-10));
      CHECK(obs.joints[j].y == doctest::Approx(oracle[j].y()).epsilon(1e-10));
      CHECK(obs.joints[j].z == doctest::Approx(oracle[j].z()).epsilon(1e-10));
    }
  }
}

TEST_CASE("translating the root translates every output point") {
  PoseState s = random_state(42);
  BodyShape b = random_shape(43);
  Observation3D base = forward_kinematics(s, b);
  PoseState moved = s;
  Vec3 d{0.7, -1.2, 3.4};
  moved.r = s.r + d;
  Observation3D shifted = forward_kinematics(moved, b);
  for (int j = 0; j < kJointCount; ++j) {
    CHECK(shifted.joints[j].x == doctest::Approx(base.joints[j].x + d.x));
    CHECK(shifted.joints[j].y == doctest::Approx(base.joints[j].y + d.y));
    CHECK(shifted.joints[j].z == doctest::Approx(base.joints[j].z + d.z));
  }
  for (int i = 0; i < kMarkerCount; ++i) {
    CHECK(shifted.markers[i].x == doctest::Approx(base.markers[i].x + d.x));
    CHECK(shifted.markers[i].y == doctest::Approx(base.markers[i].y + d.y));
    CHECK(shifted.markers[i].z == doctest::Approx(base.markers[i].z + d.z));
  }
}

TEST_CASE("markers stay rigidly attached to their segment across poses") {
  const KinematicTree& tree = KinematicTree::human22();
  BodyShape b = random_shape(77);
  std::array<double, kMarkerCount> ref{};
  for (int trial = 0; trial < 4; ++trial) {
    Observation3D obs = forward_kinematics(random_state(500 + trial), b);
    for (int i = 0; i < kMarkerCount; ++i) {
      double d = (obs.markers[i] - obs.joints[tree.markers[i].segment]).norm();
      if (trial == 0)
        ref[i] = d;
      else
        CHECK(d == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("bone lengths follow the shape scales") {
  const KinematicTree& tree = KinematicTree::human22();
  BodyShape b = random_shape(909);
  auto scales = shape_to_bone_scales(b);
  Observation3D obs = forward_kinematics(random_state(910), b);
  for (int j = 1; j < kJointCount; ++j) {
    double len = (obs.joints[j] - obs.joints[tree.parent[j]]).norm();
    CHECK(len == doctest::Approx(tree.rest_offset[j].norm() * scales[j]).epsilon(1e-10));
  }
}

TEST_CASE("pose state round-trips through its vector form") {
  PoseState s = random_state(321);
  s.r_dot = {0.1, 0.2, 0.3};
  s.phi_dot = {-0.1, 0, 0.4};
  for (auto& t : s.theta_dot) t = {0.01, -0.02, 0.03};
  Tensor v = s.to_vec();
  CHECK(v.numel() == kStateDim);
  PoseState back = PoseState::from_vec(v);
  CHECK(back.to_vec().v == v.v);

  Observation3D obs = forward_kinematics(s, random_shape(322));
  Tensor ov = obs.to_vec();
  CHECK(ov.numel() == kObsDim);
  CHECK(Observation3D::from_vec(ov).to_vec().v == ov.v);
}

TEST_CASE("velocities are per-frame deltas with a zero first frame") {
  std::vector<RawFrame> frames(3);
  frames[0].trans = {0, 0, 0};
  frames[1].trans = {0.1, 0, 0};
  frames[2].trans = {0.3, 0.1, 0};
  frames[1].pose[4] = {0.2, 0, -0.1};
  frames[2].pose[4] = {0.5, 0, -0.1};
  auto states = compute_velocities(frames);
  REQUIRE(states.size() == 3);
  CHECK(states[0].r_dot.x == 0);
  CHECK(states[1].r_dot.x == doctest::Approx(0.1));
  CHECK(states[2].r_dot.x == doctest::Approx(0.2));
  CHECK(states[2].r_dot.y == doctest::Approx(0.1));
  CHECK(states[1].theta_dot[4].x == doctest::Approx(0.2));
  CHECK(states[2].theta_dot[4].x == doctest::Approx(0.3));
  CHECK(states[2].theta[4].x == doctest::Approx(0.5));
}

TEST_CASE("pose noise leaves translations untouched and respects the seed") {
  std::vector<RawFrame> frames(10);
  Rng rng(555);
  for (auto& f : frames) {
    f.trans = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    for (auto& p : f.pose) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  }

  auto zero = inject_pose_noise(frames, 0.0, 1);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    CHECK(zero[t].trans.x == frames[t].trans.x);
    CHECK(zero[t].pose[3].x == frames[t].pose[3].x);
  }

  auto a = inject_pose_noise(frames, 0.15, 99);
  auto b = inject_pose_noise(frames, 0.15, 99);
  auto c = inject_pose_noise(frames, 0.15, 100);
  bool same_ab = true, same_ac = true;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    CHECK(a[t].trans.x == frames[t].trans.x);
    CHECK(a[t].trans.y == frames[t].trans.y);
    same_ab = same_ab && a[t].pose[0].x == b[t].pose[0].x;
    same_ac = same_ac && a[t].pose[0].x == c[t].pose[0].x;
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);

  auto no_root = inject_pose_noise(frames, 0.15, 99, false);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    CHECK(no_root[t].root_orient.x == frames[t].root_orient.x);
    CHECK(no_root[t].pose[0].x != frames[t].pose[0].x);
  }
}

TEST_CASE("tape forward kinematics reproduces the plain version") {
  PoseState s = random_state(808);
  BodyShape b = random_shape(809);
  Tensor sv = s.to_vec();

  Tape tape;
  Var state = tape.leaf(sv, false);
  Var obs = fk_obs_var(state, b);
  Tensor plain = forward_kinematics(s, b).to_vec();
  REQUIRE(tape.val(obs).numel() == kObsDim);
  for (int i = 0; i < kObsDim; ++i)
    CHECK(tape.val(obs).v[i] == doctest::Approx(plain.v[i]).epsilon(1e-13));
}

TEST_CASE("tape forward kinematics gradient matches finite differences") {
  PoseState s = random_state(811);
  BodyShape b = random_shape(812);
  Tensor w = Rng(813).uniform_vec(kObsDim, -1, 1);
  double err = testutil::fd_check(
      [&](Tape& t, Var v) { return dot(fk_obs_var(v, b), t.leaf(w)); }, s.to_vec());
  CHECK(err <= 1e-4);
}

TEST_CASE("tape rodrigues gradient is smooth through tiny angles") {
  Tensor w = Tensor::vector({1e-5, -2e-6, 5e-6});
  double err = testutil::fd_check(
      [&](Tape& t, Var v) { return sumsq(mv(rodrigues_var(v), t.leaf(Tensor::vector({1, 2, 3})))); },
      w);
  CHECK(err <= 1e-4);
}

TEST_CASE("joint-only tape chain with fixed local rotations matches plain FK") {
  PoseState s = random_state(814);
  BodyShape b = random_shape(815);
  std::array<Mat3, kJointCount - 1> local;
  for (int j = 0; j < kJointCount - 1; ++j) local[j] = rodrigues(s.theta[j]);

  Tape tape;
  Var r = tape.leaf(Tensor::vector({s.r.x, s.r.y, s.r.z}), true);
  Var phi = tape.leaf(Tensor::vector({s.phi.x, s.phi.y, s.phi.z}), true);
  Var joints = fk_joints_var(r, phi, local, b);
  Observation3D plain = forward_kinematics(s, b);
  for (int j = 0; j < kJointCount; ++j) {
    CHECK(tape.val(joints).v[3 * j] == doctest::Approx(plain.joints[j].x).epsilon(1e-12));
    CHECK(tape.val(joints).v[3 * j + 1] == doctest::Approx(plain.joints[j].y).epsilon(1e-12));
    CHECK(tape.val(joints).v[3 * j + 2] == doctest::Approx(plain.joints[j].z).epsilon(1e-12));
  }

  Tensor wv = Rng(816).uniform_vec(3 * kJointCount, -1, 1);
  double err_r = testutil::fd_check(
      [&](Tape& t, Var v) {
        Var ph = t.leaf(Tensor::vector({s.phi.x, s.phi.y, s.phi.z}));
        return dot(fk_joints_var(v, ph, local, b), t.leaf(wv));
      },
      Tensor::vector({s.r.x, s.r.y, s.r.z}));
  double err_phi = testutil::fd_check(
      [&](Tape& t, Var v) {
        Var rr = t.leaf(Tensor::vector({s.r.x, s.r.y, s.r.z}));
        return dot(fk_joints_var(rr, v, local, b), t.leaf(wv));
      },
      Tensor::vector({s.phi.x, s.phi.y, s.phi.z}));
  CHECK(err_r <= 1e-4);
  CHECK(err_phi <= 1e-4);
}
