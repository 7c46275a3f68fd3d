#include "mdn/trajectory_fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "mdn/errors.hpp"
#include "mdn/optim.hpp"
#include "mdn/tape.hpp"

namespace mdn {

namespace {

// Depth guard shared by both objective evaluations. Points that wander behind
// the image plane during a line search get a clamped depth instead of a
// division blowup; the robust kernel saturates on the huge residual anyway.
constexpr double kDepthGuard = 1e-6;

constexpr double kConfidentJoint = 0.3;  // init heuristic only

double rho_sq(double e2, double c2) { return e2 / (e2 + c2); }

bool orthonormal(const Mat3& R) {
  Mat3 G = R.transposed() * R;
  Mat3 I = Mat3::identity();
  double worst = 0;
  for (int i = 0; i < 9; ++i) worst = std::max(worst, std::abs(G.m[i] - I.m[i]));
  if (worst > 1e-6) return false;
  double det = R.m[0] * (R.m[4] * R.m[8] - R.m[5] * R.m[7]) -
               R.m[1] * (R.m[3] * R.m[8] - R.m[5] * R.m[6]) +
               R.m[2] * (R.m[3] * R.m[7] - R.m[4] * R.m[6]);
  return det > 0;
}

// Precomputed per-frame pieces of the data term.
struct FramePlan {
  bool active = false;      // has any joint at or above the confidence floor
  std::vector<int> joints;  // strictly positive confidence only
};

std::vector<FramePlan> plan_frames(const std::vector<Detection2D>& dets,
                                   double conf_floor) {
  std::vector<FramePlan> plans(dets.size());
  for (std::size_t t = 0; t < dets.size(); ++t) {
    for (int j = 0; j < kJointCount; ++j) {
      double c = dets[t].joints[j].conf;
      if (c >= conf_floor) plans[t].active = true;
      if (c > 0) plans[t].joints.push_back(j);
    }
    if (!plans[t].active) plans[t].joints.clear();
  }
  return plans;
}

std::array<Vec3, kJointCount> world_joints(const Vec3& r, const Vec3& phi,
                                           const LocalPose& theta, const BodyShape& shape) {
  PoseState st;
  st.r = r;
  st.phi = phi;
  st.theta = theta;
  return forward_kinematics(st, shape).joints;
}

Var constant_mat(Tape& tape, const Mat3& R) {
  Tensor t = Tensor::zeros({3, 3});
  for (int i = 0; i < 9; ++i) t.v[i] = R.m[i];
  return tape.constant(std::move(t));
}

// max(z, kDepthGuard) built from ops the tape has: e + ((z-e) + |z-e|)/2.
Var guard_depth(Var z) {
  Var zm = add_const(z, -kDepthGuard);
  Var az = sqrt(mul(zm, zm));
  return add_const(scale(add(zm, az), 0.5), kDepthGuard);
}

void check_inputs(const std::vector<Detection2D>& detections,
                  const std::vector<LocalPose>& theta, const PinholeCamera& cam,
                  const TrajectoryFitConfig& config) {
  if (detections.empty()) throw DataError("trajectory fit: no detection frames");
  if (theta.size() != detections.size())
    throw DataError("trajectory fit: " + std::to_string(detections.size()) +
                    " detection frames but " + std::to_string(theta.size()) +
                    " pose frames");
  if (!(cam.fx > 0) || !(cam.fy > 0))
    throw DataError("trajectory fit: camera focal lengths must be positive");
  if (!orthonormal(cam.R)) throw DataError("trajectory fit: camera R is not a rotation");
  if (!config.r_init.empty() && config.r_init.size() != detections.size())
    throw DataError("trajectory fit: r_init has " + std::to_string(config.r_init.size()) +
                    " entries for " + std::to_string(detections.size()) + " frames");
  if (!config.phi_init.empty() && config.phi_init.size() != detections.size())
    throw DataError("trajectory fit: phi_init has " +
                    std::to_string(config.phi_init.size()) + " entries for " +
                    std::to_string(detections.size()) + " frames");
  if (!(config.gm_scale_px > 0))
    throw DataError("trajectory fit: gm_scale_px must be positive");
}

// Rough metric placement from the detections alone: scale the body's metric
// extent against the pixel extent for depth, then back-project the centroid.
std::vector<Vec3> heuristic_r_init(const std::vector<Detection2D>& dets,
                                   const std::vector<LocalPose>& theta,
                                   const BodyShape& shape, const PinholeCamera& cam) {
  std::vector<Vec3> out(dets.size());
  Vec3 last{0.0, 0.0, 3.0};
  for (std::size_t t = 0; t < dets.size(); ++t) {
    auto joints = world_joints(Vec3{0, 0, 0}, Vec3{0, 0, 0}, theta[t], shape);
    double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    double u_sum = 0, v_sum = 0;
    Vec3 c0{0, 0, 0};
    int n = 0;
    for (int j = 0; j < kJointCount; ++j) {
      if (dets[t].joints[j].conf < kConfidentJoint) continue;
      double u = dets[t].joints[j].u, v = dets[t].joints[j].v;
      ulo = std::min(ulo, u);
      uhi = std::max(uhi, u);
      vlo = std::min(vlo, v);
      vhi = std::max(vhi, v);
      u_sum += u;
      v_sum += v;
      const Vec3& p = joints[j];
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
      c0 = c0 + p;
      ++n;
    }
    double px_extent = std::hypot(uhi - ulo, vhi - vlo);
    if (n < 3 || px_extent < 1.0) {
      out[t] = last;  // not enough signal; coast on the previous frame
      continue;
    }
    double metric_extent = (hi - lo).norm();
    double f = 0.5 * (cam.fx + cam.fy);
    double z = f * metric_extent / px_extent;
    Vec3 dir{(u_sum / n - cam.cx) / cam.fx, (v_sum / n - cam.cy) / cam.fy, 1.0};
    Vec3 centroid_cam = dir * z;
    Vec3 centroid_world = cam.R.transposed() * (centroid_cam - cam.t);
    out[t] = centroid_world - c0 * (1.0 / n);
    last = out[t];
  }
  return out;
}

}  // namespace

double geman_mcclure(double residual, double scale) {
  if (!(scale > 0)) throw std::invalid_argument("geman_mcclure: scale must be positive");
  return rho_sq(residual * residual, scale * scale);
}

std::vector<PixelPoint> project(const std::vector<Vec3>& points, const PinholeCamera& cam) {
  std::vector<PixelPoint> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    Vec3 pc = cam.R * points[i] + cam.t;
    if (!(pc.z > 0)) continue;  // leaves valid == false
    out[i].u = cam.fx * pc.x / pc.z + cam.cx;
    out[i].v = cam.fy * pc.y / pc.z + cam.cy;
    out[i].valid = true;
  }
  return out;
}

PinholeCamera PinholeCamera::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("camera: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("camera: " + path + ": " + e.what());
  }
  PinholeCamera cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    auto R = j.at("R").get<std::vector<double>>();
    auto t = j.at("t").get<std::vector<double>>();
    if (R.size() != 9) throw DataError("camera: " + path + ": R must have 9 entries");
    if (t.size() != 3) throw DataError("camera: " + path + ": t must have 3 entries");
    std::copy(R.begin(), R.end(), cam.R.m.begin());
    cam.t = {t[0], t[1], t[2]};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("camera: " + path + ": " + e.what());
  }
  if (!(cam.fx > 0) || !(cam.fy > 0))
    throw DataError("camera: " + path + ": focal lengths must be positive");
  if (!orthonormal(cam.R))
    throw DataError("camera: " + path + ": R is not a rotation matrix");
  return cam;
}

void PinholeCamera::save(const std::string& path) const {
  nlohmann::json j;
  j["fx"] = fx;
  j["fy"] = fy;
  j["cx"] = cx;
  j["cy"] = cy;
  j["R"] = std::vector<double>(R.m.begin(), R.m.end());
  j["t"] = {t.x, t.y, t.z};
  std::ofstream out(path);
  if (!out) throw DataError("camera: cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<Detection2D> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("detections: cannot open " + path);
  std::vector<Detection2D> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      throw DataError("detections: " + path + ": line " + std::to_string(line_no) +
                      ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
    if (!j.contains("joints") || !j["joints"].is_array()) fail("missing joints array");
    const auto& arr = j["joints"];
    if (arr.size() != std::size_t(kJointCount))
      fail("expected " + std::to_string(kJointCount) + " joints, got " +
           std::to_string(arr.size()));
    Detection2D det;
    for (int k = 0; k < kJointCount; ++k) {
      const auto& e = arr[k];
      if (!e.is_array() || e.size() != 3 || !e[0].is_number() || !e[1].is_number() ||
          !e[2].is_number())
        fail("joint " + std::to_string(k) + " must be [u, v, conf]");
      det.joints[k] = {e[0].get<double>(), e[1].get<double>(), e[2].get<double>()};
      if (!std::isfinite(det.joints[k].u) || !std::isfinite(det.joints[k].v))
        fail("joint " + std::to_string(k) + " has non-finite coordinates");
      if (!(det.joints[k].conf >= 0.0 && det.joints[k].conf <= 1.0))
        fail("joint " + std::to_string(k) + " confidence outside [0, 1]");
    }
    out.push_back(det);
  }
  return out;
}

void save_detections(const std::vector<Detection2D>& dets, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("detections: cannot write " + path);
  for (const Detection2D& d : dets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const JointDetection& jd : d.joints) arr.push_back({jd.u, jd.v, jd.conf});
    nlohmann::json j;
    j["joints"] = std::move(arr);
    out << j.dump() << "\n";
  }
}

double trajectory_objective(const std::vector<Vec3>& r, const std::vector<Vec3>& phi,
                            const std::vector<Detection2D>& detections,
                            const std::vector<LocalPose>& theta, const BodyShape& shape,
                            const PinholeCamera& cam, const TrajectoryFitConfig& config) {
  if (r.size() != detections.size() || phi.size() != detections.size())
    throw DataError("trajectory objective: r/phi must have one entry per frame");
  if (detections.empty()) throw DataError("trajectory objective: no detection frames");
  if (theta.size() != detections.size())
    throw DataError("trajectory objective: theta must have one entry per frame");
  if (!(config.gm_scale_px > 0))
    throw DataError("trajectory objective: gm_scale_px must be positive");
  const std::size_t T = detections.size();
  const double c2 = config.gm_scale_px * config.gm_scale_px;
  auto plans = plan_frames(detections, config.conf_floor);

  double data = 0.0, smooth = 0.0;
  std::array<Vec3, kJointCount> prev{};
  for (std::size_t t = 0; t < T; ++t) {
    auto joints = world_joints(r[t], phi[t], theta[t], shape);
    for (int j : plans[t].joints) {
      Vec3 pc = cam.R * joints[j] + cam.t;
      double z = std::max(pc.z, kDepthGuard);
      double du = cam.fx * pc.x / z + cam.cx - detections[t].joints[j].u;
      double dv = cam.fy * pc.y / z + cam.cy - detections[t].joints[j].v;
      data += detections[t].joints[j].conf * rho_sq(du * du + dv * dv, c2);
    }
    if (t > 0)
      for (int j = 0; j < kJointCount; ++j) smooth += (joints[j] - prev[j]).norm2();
    prev = joints;
  }
  return config.lambda_data * data + config.lambda_smooth * smooth;
}

TrajectoryFitResult fit_global_trajectory(const std::vector<Detection2D>& detections,
                                          const std::vector<LocalPose>& theta,
                                          const BodyShape& shape, const PinholeCamera& cam,
                                          const TrajectoryFitConfig& config) {
  check_inputs(detections, theta, cam, config);
  const int T = int(detections.size());
  const double c2 = config.gm_scale_px * config.gm_scale_px;
  auto plans = plan_frames(detections, config.conf_floor);

  std::vector<Vec3> r0 =
      config.r_init.empty() ? heuristic_r_init(detections, theta, shape, cam)
                            : config.r_init;
  std::vector<Vec3> phi0(T, Vec3{0, 0, 0});
  if (!config.phi_init.empty()) phi0 = config.phi_init;

  // the orientation variable is an increment on the initial rotation, so the
  // optimizer always starts at zero and never sees axis-angle wraparound
  std::vector<Mat3> base_rot(T);
  std::vector<std::array<Mat3, kJointCount - 1>> local_rot(T);
  for (int t = 0; t < T; ++t) {
    base_rot[t] = rodrigues(phi0[t]);
    for (int j = 0; j < kJointCount - 1; ++j) local_rot[t][j] = rodrigues(theta[t][j]);
  }

  Tensor x0 = Tensor::zeros({6 * T});
  for (int t = 0; t < T; ++t) {
    x0.v[6 * t + 0] = r0[t].x;
    x0.v[6 * t + 1] = r0[t].y;
    x0.v[6 * t + 2] = r0[t].z;
  }

  VecObjective objective = [&](const Tensor& x, Tensor& grad) -> double {
    Tape tape;
    tape.reserve(std::size_t(T) * 800);
    Var Rc = constant_mat(tape, cam.R);
    Var tc = tape.constant(Tensor::vector({cam.t.x, cam.t.y, cam.t.z}));
    Var data = tape.constant(0.0);
    Var smooth = tape.constant(0.0);
    std::vector<Var> rv(T), pv(T);
    Var prev_joints;
    for (int t = 0; t < T; ++t) {
      rv[t] = tape.leaf(Tensor::vector({x.v[6 * t], x.v[6 * t + 1], x.v[6 * t + 2]}), true);
      pv[t] = tape.leaf(
          Tensor::vector({x.v[6 * t + 3], x.v[6 * t + 4], x.v[6 * t + 5]}), true);
      Var joints = fk_joints_var(rv[t], pv[t], local_rot[t], shape, &base_rot[t]);
      for (int j : plans[t].joints) {
        Var p3 = slice(joints, 3 * j, 3);
        Var pc = add(mv(Rc, p3), tc);
        Var z = guard_depth(slice(pc, 2, 1));
        Var du = add_const(scale(div(slice(pc, 0, 1), z), cam.fx),
                           cam.cx - detections[t].joints[j].u);
        Var dv = add_const(scale(div(slice(pc, 1, 1), z), cam.fy),
                           cam.cy - detections[t].joints[j].v);
        Var e2 = add(mul(du, du), mul(dv, dv));
        Var rho = reshape(div(e2, add_const(e2, c2)), {});
        data = add(data, scale(rho, detections[t].joints[j].conf));
      }
      if (t > 0) smooth = add(smooth, sumsq(sub(joints, prev_joints)));
      prev_joints = joints;
    }
    Var total = add(scale(data, config.lambda_data), scale(smooth, config.lambda_smooth));
    tape.backward(total);
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < 3; ++k) {
        grad.v[6 * t + k] = tape.has_grad(rv[t]) ? tape.grad(rv[t]).v[k] : 0.0;
        grad.v[6 * t + 3 + k] = tape.has_grad(pv[t]) ? tape.grad(pv[t]).v[k] : 0.0;
      }
    }
    return tape.val(total).v[0];
  };

  LbfgsConfig lcfg;
  lcfg.max_iters = config.max_iters;
  lcfg.tolerance = config.tolerance;
  LbfgsResult lres = lbfgs_minimize(objective, x0, lcfg);

  TrajectoryFitResult res;
  res.iterations = lres.iterations;
  res.converged = lres.converged;
  res.r.resize(T);
  res.phi.resize(T);
  for (int t = 0; t < T; ++t) {
    res.r[t] = {lres.x.v[6 * t], lres.x.v[6 * t + 1], lres.x.v[6 * t + 2]};
    Vec3 dphi{lres.x.v[6 * t + 3], lres.x.v[6 * t + 4], lres.x.v[6 * t + 5]};
    res.phi[t] = rotation_log(rodrigues(dphi) * base_rot[t]);
  }
  res.initial_objective =
      trajectory_objective(r0, phi0, detections, theta, shape, cam, config);
  res.objective =
      trajectory_objective(res.r, res.phi, detections, theta, shape, cam, config);
  // composing the increment through rotation_log and re-evaluating can cost a
  // few ulps; never report a step backward, return the start instead
  if (res.objective > res.initial_objective) {
    res.r = std::move(r0);
    res.phi = std::move(phi0);
    res.objective = res.initial_objective;
  }
  return res;
}

}  // namespace mdn
