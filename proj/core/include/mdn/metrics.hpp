#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mdn/kinematics.hpp"

namespace mdn {

// Mean Euclidean distance over all 65 observed points and frames, in cm.
double v2v_cm(const std::vector<Observation3D>& pred, const std::vector<Observation3D>& gt);

// Local mode subtracts the root joint from both sides per frame; global is raw
// world-frame error. Both in cm, joints only.
enum class MpjpeMode { Global, Local };
double mpjpe_cm(const std::vector<Observation3D>& pred, const std::vector<Observation3D>& gt,
                MpjpeMode mode);

// Mean over interior frames and joints of ||p_{t+1} - 2 p_t + p_{t-1}|| * fps^2.
double mean_joint_accel(const std::vector<Observation3D>& seq, double fps);

// One untimed warmup, then median of 3 timed runs divided by total_frames.
double speed_benchmark(const std::function<void()>& method, long total_frames);

struct SeqMetrics {
  std::string name;
  double v2v_cm = 0;
  double mpjpe_cm = 0;
  double gmpjpe_cm = 0;
  double accel_m_s2 = 0;
  double sec_per_frame = 0;
};

struct EvalReport {
  std::vector<SeqMetrics> per_seq;
  SeqMetrics aggregate;  // per-sequence means

  void finalize();
};

struct EvalBaselines {
  double obs_v2v_cm = 0;  // error of the raw noisy observations
  double gt_accel = 0;    // clean-corpus mean joint acceleration
  double fps = 30;
};

enum class Region { Green, Yellow, Red };
const char* to_string(Region r);

// Pass/fail against the three acceptability thresholds: error reduced to at
// most 2/3 of the observations', acceleration within [0.5, 2] of ground truth,
// and at most 10x slower than the frame rate. Green = all three, yellow =
// exactly two, red otherwise.
struct ThresholdReport {
  bool accuracy_pass = false;
  bool plausibility_pass = false;
  bool speed_pass = false;
  double v2v_ratio = 0;    // aggregate v2v / obs v2v
  double accel_ratio = 0;  // aggregate accel / gt accel
  double speed_ratio = 0;  // aggregate sec_per_frame * fps
  Region region = Region::Red;
};

ThresholdReport threshold_report(const EvalReport& report, const EvalBaselines& baselines);

void write_report_json(const EvalReport& report, const ThresholdReport* thresholds,
                       const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace mdn
