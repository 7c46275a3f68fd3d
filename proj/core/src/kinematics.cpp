#include "mdn/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdn/rng.hpp"

namespace mdn {

double Vec3::norm() const { return std::sqrt(norm2()); }

Mat3 Mat3::identity() {
  Mat3 r;
  r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return r;
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += m[3 * i + k] * o.m[3 * k + j];
      r.m[3 * i + j] = acc;
    }
  return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[3 * i + j] = m[3 * j + i];
  return r;
}

namespace {

constexpr double kSeriesT2 = 1e-8;

// sin(t)/t and (1-cos(t))/t^2 as smooth functions of t^2.
void rot_coeffs(double t2, double& a, double& b) {
  if (t2 < kSeriesT2) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    double t = std::sqrt(t2);
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
  }
}

}  // namespace

Mat3 rodrigues(const Vec3& w) {
  double t2 = w.norm2();
  double a, b;
  rot_coeffs(t2, a, b);
  double c0 = 1.0 - b * t2;
  Mat3 r;
  r.m = {c0 + b * w.x * w.x, b * w.x * w.y - a * w.z, b * w.x * w.z + a * w.y,
         b * w.x * w.y + a * w.z, c0 + b * w.y * w.y, b * w.y * w.z - a * w.x,
         b * w.x * w.z - a * w.y, b * w.y * w.z + a * w.x, c0 + b * w.z * w.z};
  return r;
}

const KinematicTree& KinematicTree::human22() {
  static const KinematicTree tree = [] {
    KinematicTree t;
    t.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    // Y up, x to the body's left, z forward; meters.
    t.rest_offset = {Vec3{0, 0, 0},           // pelvis
                     Vec3{0.09, -0.06, 0},    // left hip
                     Vec3{-0.09, -0.06, 0},   // right hip
                     Vec3{0, 0.11, 0},        // lower spine
                     Vec3{0, -0.38, 0},       // left knee
                     Vec3{0, -0.38, 0},       // right knee
                     Vec3{0, 0.13, 0},        // mid spine
                     Vec3{0, -0.40, 0},       // left ankle
                     Vec3{0, -0.40, 0},       // right ankle
                     Vec3{0, 0.05, 0},        // upper spine
                     Vec3{0, -0.06, 0.12},    // left foot
                     Vec3{0, -0.06, 0.12},    // right foot
                     Vec3{0, 0.21, 0},        // neck
                     Vec3{0.07, 0.15, 0},     // left collar
                     Vec3{-0.07, 0.15, 0},    // right collar
                     Vec3{0, 0.09, 0},        // head
                     Vec3{0.10, 0.02, 0},     // left shoulder
                     Vec3{-0.10, 0.02, 0},    // right shoulder
                     Vec3{0.26, 0, 0},        // left elbow
                     Vec3{-0.26, 0, 0},       // right elbow
                     Vec3{0.25, 0, 0},        // left wrist
                     Vec3{-0.25, 0, 0}};      // right wrist

    Rng rng(0xB0D722);
    for (int j = 0; j < kJointCount; ++j)
      for (int k = 0; k < kShapeDim; ++k) t.shape_blend[j][k] = rng.uniform(-0.05, 0.05);

    for (int i = 0; i < kMarkerCount; ++i) {
      KinematicTree::Marker mk;
      mk.segment = i % kJointCount;
      do {
        mk.offset = {rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)};
      } while (mk.offset.norm() < 0.03);
      t.markers[i] = mk;
    }
    return t;
  }();
  return tree;
}

std::array<double, kJointCount> shape_to_bone_scales(const BodyShape& shape) {
  const KinematicTree& tree = KinematicTree::human22();
  std::array<double, kJointCount> scales;
  for (int j = 0; j < kJointCount; ++j) {
    double s = 1.0;
    for (int k = 0; k < kShapeDim; ++k) s += tree.shape_blend[j][k] * shape.beta[k];
    scales[j] = std::clamp(s, 0.5, 2.0);
  }
  return scales;
}

Tensor PoseState::to_vec() const {
  Tensor t = Tensor::zeros({kStateDim});
  auto put3 = [&](int at, const Vec3& v) {
    t.v[at] = v.x;
    t.v[at + 1] = v.y;
    t.v[at + 2] = v.z;
  };
  put3(0, r);
  put3(3, r_dot);
  put3(6, phi);
  put3(9, phi_dot);
  for (int j = 0; j < kJointCount - 1; ++j) {
    put3(12 + 3 * j, theta[j]);
    put3(12 + kPoseDim + 3 * j, theta_dot[j]);
  }
  return t;
}

PoseState PoseState::from_vec(const Tensor& t) {
  if (t.numel() != kStateDim) throw std::invalid_argument("PoseState::from_vec: wrong size");
  auto get3 = [&](int at) { return Vec3{t.v[at], t.v[at + 1], t.v[at + 2]}; };
  PoseState s;
  s.r = get3(0);
  s.r_dot = get3(3);
  s.phi = get3(6);
  s.phi_dot = get3(9);
  for (int j = 0; j < kJointCount - 1; ++j) {
    s.theta[j] = get3(12 + 3 * j);
    s.theta_dot[j] = get3(12 + kPoseDim + 3 * j);
  }
  return s;
}

Tensor Observation3D::to_vec() const {
  Tensor t = Tensor::zeros({kObsDim});
  for (int j = 0; j < kJointCount; ++j) {
    t.v[3 * j] = joints[j].x;
    t.v[3 * j + 1] = joints[j].y;
    t.v[3 * j + 2] = joints[j].z;
  }
  for (int i = 0; i < kMarkerCount; ++i) {
    int at = 3 * (kJointCount + i);
    t.v[at] = markers[i].x;
    t.v[at + 1] = markers[i].y;
    t.v[at + 2] = markers[i].z;
  }
  return t;
}

Observation3D Observation3D::from_vec(const Tensor& t) {
  if (t.numel() != kObsDim) throw std::invalid_argument("Observation3D::from_vec: wrong size");
  Observation3D o;
  for (int j = 0; j < kJointCount; ++j)
    o.joints[j] = {t.v[3 * j], t.v[3 * j + 1], t.v[3 * j + 2]};
  for (int i = 0; i < kMarkerCount; ++i) {
    int at = 3 * (kJointCount + i);
    o.markers[i] = {t.v[at], t.v[at + 1], t.v[at + 2]};
  }
  return o;
}

Observation3D forward_kinematics(const PoseState& state, const BodyShape& shape) {
  const KinematicTree& tree = KinematicTree::human22();
  auto scales = shape_to_bone_scales(shape);

  std::array<Mat3, kJointCount> rot_w;
  std::array<Vec3, kJointCount> pos;
  rot_w[0] = rodrigues(state.phi);
  pos[0] = state.r;
  for (int j = 1; j < kJointCount; ++j) {
    int par = tree.parent[j];
    rot_w[j] = rot_w[par] * rodrigues(state.theta[j - 1]);
    pos[j] = pos[par] + rot_w[par] * (tree.rest_offset[j] * scales[j]);
  }

  Observation3D obs;
  obs.joints = pos;
  for (int i = 0; i < kMarkerCount; ++i) {
    const auto& mk = tree.markers[i];
    obs.markers[i] = pos[mk.segment] + rot_w[mk.segment] * mk.offset;
  }
  return obs;
}

std::vector<PoseState> compute_velocities(const std::vector<RawFrame>& frames) {
  std::vector<PoseState> out(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    PoseState& s = out[t];
    s.r = frames[t].trans;
    s.phi = frames[t].root_orient;
    s.theta = frames[t].pose;
    if (t > 0) {
      s.r_dot = frames[t].trans - frames[t - 1].trans;
      s.phi_dot = frames[t].root_orient - frames[t - 1].root_orient;
      for (int j = 0; j < kJointCount - 1; ++j)
        s.theta_dot[j] = frames[t].pose[j] - frames[t - 1].pose[j];
    }
  }
  return out;
}

std::vector<RawFrame> inject_pose_noise(const std::vector<RawFrame>& frames, double sigma,
                                        std::uint64_t seed, bool corrupt_root) {
  if (sigma < 0) throw std::invalid_argument("inject_pose_noise: sigma must be >= 0");
  Rng rng(seed);
  std::vector<RawFrame> out = frames;
  for (auto& f : out) {
    if (corrupt_root) {
      f.root_orient.x += sigma * rng.normal();
      f.root_orient.y += sigma * rng.normal();
      f.root_orient.z += sigma * rng.normal();
    }
    for (auto& p : f.pose) {
      p.x += sigma * rng.normal();
      p.y += sigma * rng.normal();
      p.z += sigma * rng.normal();
    }
  }
  return out;
}

namespace {

// Scalar helpers on {1}-shaped vars.
Var sq(Var a) { return mul(a, a); }

struct RotParts {
  Var a, b, c0;  // sin(t)/t, (1-cos t)/t^2, 1 - b t^2
};

RotParts rot_coeffs_var(Var t2) {
  double t2v = t2.tape->val(t2).v[0];
  RotParts p;
  if (t2v < kSeriesT2) {
    p.a = add_const(add(scale(t2, -1.0 / 6.0), scale(sq(t2), 1.0 / 120.0)), 1.0);
    p.b = add_const(add(scale(t2, -1.0 / 24.0), scale(sq(t2), 1.0 / 720.0)), 0.5);
  } else {
    Var t = sqrt(t2);
    p.a = div(sin(t), t);
    p.b = div(add_const(neg(cos(t)), 1.0), t2);
  }
  p.c0 = add_const(neg(mul(p.b, t2)), 1.0);
  return p;
}

Var pack9(const std::array<Var, 9>& e) {
  Var v = e[0];
  for (int i = 1; i < 9; ++i) v = concat(v, e[i]);
  return reshape(v, {3, 3});
}

struct FkChain {
  std::array<Var, kJointCount> rot_w;
  std::array<Var, kJointCount> pos;
};

FkChain fk_chain(Tape& tape, Var r, Var rot_root, const std::array<Var, kJointCount - 1>& local,
                 const BodyShape& shape) {
  const KinematicTree& tree = KinematicTree::human22();
  auto scales = shape_to_bone_scales(shape);
  FkChain c;
  c.rot_w[0] = rot_root;
  c.pos[0] = r;
  for (int j = 1; j < kJointCount; ++j) {
    int par = tree.parent[j];
    c.rot_w[j] = mm(c.rot_w[par], local[j - 1]);
    Vec3 o = tree.rest_offset[j] * scales[j];
    Var off = tape.constant(Tensor::vector({o.x, o.y, o.z}));
    c.pos[j] = add(c.pos[par], mv(c.rot_w[par], off));
  }
  return c;
}

}  // namespace

Var rodrigues_var(Var w3) {
  Var wx = slice(w3, 0, 1), wy = slice(w3, 1, 1), wz = slice(w3, 2, 1);
  Var t2 = add(add(sq(wx), sq(wy)), sq(wz));
  RotParts cf = rot_coeffs_var(t2);
  auto bxy = [&](Var u, Var v) { return mul(cf.b, mul(u, v)); };
  auto av = [&](Var u) { return mul(cf.a, u); };
  std::array<Var, 9> e = {
      add(cf.c0, bxy(wx, wx)), sub(bxy(wx, wy), av(wz)), add(bxy(wx, wz), av(wy)),
      add(bxy(wx, wy), av(wz)), add(cf.c0, bxy(wy, wy)), sub(bxy(wy, wz), av(wx)),
      sub(bxy(wx, wz), av(wy)), add(bxy(wy, wz), av(wx)), add(cf.c0, bxy(wz, wz))};
  return pack9(e);
}

Var fk_obs_var(Var state138, const BodyShape& shape) {
  Tape& tape = *state138.tape;
  if (tape.val(state138).numel() != kStateDim)
    throw std::invalid_argument("fk_obs_var: state must have 138 dims");
  const KinematicTree& tree = KinematicTree::human22();

  Var r = slice(state138, 0, 3);
  Var phi = slice(state138, 6, 3);
  std::array<Var, kJointCount - 1> local;
  for (int j = 0; j < kJointCount - 1; ++j)
    local[j] = rodrigues_var(slice(state138, 12 + 3 * j, 3));

  FkChain c = fk_chain(tape, r, rodrigues_var(phi), local, shape);

  Var out = c.pos[0];
  for (int j = 1; j < kJointCount; ++j) out = concat(out, c.pos[j]);
  for (int i = 0; i < kMarkerCount; ++i) {
    const auto& mk = tree.markers[i];
    Var off = tape.constant(Tensor::vector({mk.offset.x, mk.offset.y, mk.offset.z}));
    out = concat(out, add(c.pos[mk.segment], mv(c.rot_w[mk.segment], off)));
  }
  return out;
}

Var fk_joints_var(Var r3, Var phi3, const std::array<Mat3, kJointCount - 1>& local_rot,
                  const BodyShape& shape, const Mat3* pre_rotation) {
  Tape& tape = *r3.tape;
  std::array<Var, kJointCount - 1> local;
  for (int j = 0; j < kJointCount - 1; ++j) {
    Tensor t = Tensor::zeros({3, 3});
    for (int i = 0; i < 9; ++i) t.v[i] = local_rot[j].m[i];
    local[j] = tape.constant(std::move(t));
  }
  Var root = rodrigues_var(phi3);
  if (pre_rotation) {
    Tensor t = Tensor::zeros({3, 3});
    for (int i = 0; i < 9; ++i) t.v[i] = pre_rotation->m[i];
    root = mm(root, tape.constant(std::move(t)));
  }
  FkChain c = fk_chain(tape, r3, root, local, shape);
  Var out = c.pos[0];
  for (int j = 1; j < kJointCount; ++j) out = concat(out, c.pos[j]);
  return out;
}

Vec3 rotation_log(const Mat3& R) {
  double tr = R.m[0] + R.m[4] + R.m[8];
  double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  double angle = std::acos(c);
  Vec3 vee{R.m[7] - R.m[5], R.m[2] - R.m[6], R.m[3] - R.m[1]};
  if (angle < M_PI - 1e-3) {
    if (angle < 1e-7) return vee * 0.5;
    return vee * (angle / (2.0 * std::sin(angle)));
  }
  // near pi the skew part degenerates; recover the axis from the symmetric part
  double one_minus_c = 1.0 - c;
  double axx = (R.m[0] - c) / one_minus_c;
  double ayy = (R.m[4] - c) / one_minus_c;
  double azz = (R.m[8] - c) / one_minus_c;
  Vec3 a;
  if (axx >= ayy && axx >= azz) {
    a.x = std::sqrt(std::max(axx, 0.0));
    double d = 2.0 * one_minus_c * a.x;
    a.y = (R.m[1] + R.m[3]) / d;
    a.z = (R.m[2] + R.m[6]) / d;
  } else if (ayy >= azz) {
    a.y = std::sqrt(std::max(ayy, 0.0));
    double d = 2.0 * one_minus_c * a.y;
    a.x = (R.m[1] + R.m[3]) / d;
    a.z = (R.m[5] + R.m[7]) / d;
  } else {
    a.z = std::sqrt(std::max(azz, 0.0));
    double d = 2.0 * one_minus_c * a.z;
    a.x = (R.m[2] + R.m[6]) / d;
    a.y = (R.m[5] + R.m[7]) / d;
  }
  double n = a.norm();
  if (n > 0) a = a * (1.0 / n);
  // the remaining sign ambiguity: align with the skew part when it has one,
  // otherwise make the leading nonzero component positive
  double dot_vee = a.x * vee.x + a.y * vee.y + a.z * vee.z;
  if (dot_vee < 0)
    a = a * -1.0;
  else if (dot_vee == 0 &&
           (a.x < 0 || (a.x == 0 && (a.y < 0 || (a.y == 0 && a.z < 0)))))
    a = a * -1.0;
  return a * angle;
}

}  // namespace mdn
