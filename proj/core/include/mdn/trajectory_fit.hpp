#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mdn/kinematics.hpp"

namespace mdn {

// Calibrated pinhole camera. R maps world to camera coordinates, t is the
// world origin expressed in the camera frame: p_cam = R p_world + t.
struct PinholeCamera {
  double fx = 1000.0, fy = 1000.0;
  double cx = 0.0, cy = 0.0;
  Mat3 R = Mat3::identity();
  Vec3 t{0.0, 0.0, 0.0};

  // JSON file {fx, fy, cx, cy, R: [9 row-major], t: [3]}. Loading validates
  // positive focal lengths and an orthonormal R; throws DataError otherwise.
  static PinholeCamera load(const std::string& path);
  void save(const std::string& path) const;
};

struct PixelPoint {
  double u = 0.0, v = 0.0;
  bool valid = false;  // false when the point is not strictly in front
};

std::vector<PixelPoint> project(const std::vector<Vec3>& points,
                                const PinholeCamera& cam);

// One detected joint in the image, confidence in [0, 1].
struct JointDetection {
  double u = 0.0, v = 0.0;
  double conf = 0.0;
};

// Per-frame 2D detections for the full 22-joint body.
struct Detection2D {
  std::array<JointDetection, kJointCount> joints;
};

// JSONL, one frame per line: {"joints": [[u, v, conf] x 22]}. Errors carry
// 1-based line numbers.
std::vector<Detection2D> load_detections(const std::string& path);
void save_detections(const std::vector<Detection2D>& dets, const std::string& path);

// Saturating robust kernel: e^2 / (e^2 + scale^2), climbing from 0 toward 1.
double geman_mcclure(double residual, double scale);

using LocalPose = std::array<Vec3, kJointCount - 1>;

struct TrajectoryFitConfig {
  double lambda_data = 1.0;
  double lambda_smooth = 10.0;
  double gm_scale_px = 100.0;  // residual (pixels) where the kernel reaches 1/2
  int max_iters = 150;
  double tolerance = 1e-10;  // gradient norm stop; the basin is shallow because
                             // the robust kernel flattens curvature near zero
  double conf_floor = 0.05;  // frames whose best confidence is below drop out
  // optional warm start, one entry per frame; empty means use the built-in
  // depth heuristic and an identity root orientation
  std::vector<Vec3> r_init;
  std::vector<Vec3> phi_init;
};

struct TrajectoryFitResult {
  std::vector<Vec3> r;    // root translation per frame
  std::vector<Vec3> phi;  // root orientation per frame, axis-angle
  double objective = 0.0;
  double initial_objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// The scalar being minimized: lambda_data * sum of confidence-weighted robust
// reprojection errors over the 22 joints plus lambda_smooth * sum of squared
// frame-to-frame joint displacements. Exposed for diagnostics and tests.
double trajectory_objective(const std::vector<Vec3>& r, const std::vector<Vec3>& phi,
                            const std::vector<Detection2D>& detections,
                            const std::vector<LocalPose>& theta, const BodyShape& shape,
                            const PinholeCamera& cam, const TrajectoryFitConfig& config);

// Recovers the global trajectory (root translation and orientation per frame)
// from monocular detections, holding the body pose theta fixed. The local pose
// enters as axis-angle per non-root joint, matching RawFrame::pose.
TrajectoryFitResult fit_global_trajectory(const std::vector<Detection2D>& detections,
                                          const std::vector<LocalPose>& theta,
                                          const BodyShape& shape, const PinholeCamera& cam,
                                          const TrajectoryFitConfig& config = {});

}  // namespace mdn
