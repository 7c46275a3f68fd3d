#include "mdn/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mdn/errors.hpp"

namespace mdn {

namespace {

void check_lengths(std::size_t pred, std::size_t gt, const char* what) {
  if (pred != gt)
    throw DataError(std::string(what) + ": sequence length mismatch (" + std::to_string(pred) +
                    " vs " + std::to_string(gt) + ")");
  if (pred == 0) throw DataError(std::string(what) + ": empty sequences");
}

}  // namespace

double v2v_cm(const std::vector<Observation3D>& pred, const std::vector<Observation3D>& gt) {
  check_lengths(pred.size(), gt.size(), "v2v_cm");
  double acc = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    for (int j = 0; j < kJointCount; ++j) acc += (pred[t].joints[j] - gt[t].joints[j]).norm();
    for (int m = 0; m < kMarkerCount; ++m) acc += (pred[t].markers[m] - gt[t].markers[m]).norm();
  }
  return 100.0 * acc / (double(pred.size()) * kPointCount);
}

double mpjpe_cm(const std::vector<Observation3D>& pred, const std::vector<Observation3D>& gt,
                MpjpeMode mode) {
  check_lengths(pred.size(), gt.size(), "mpjpe_cm");
  double acc = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    Vec3 rp{}, rg{};
    if (mode == MpjpeMode::Local) {
      rp = pred[t].joints[0];
      rg = gt[t].joints[0];
    }
    for (int j = 0; j < kJointCount; ++j)
      acc += ((pred[t].joints[j] - rp) - (gt[t].joints[j] - rg)).norm();
  }
  return 100.0 * acc / (double(pred.size()) * kJointCount);
}

double mean_joint_accel(const std::vector<Observation3D>& seq, double fps) {
  if (seq.size() < 3)
    throw DataError("mean_joint_accel: need at least 3 frames, got " + std::to_string(seq.size()));
  double acc = 0;
  for (std::size_t t = 1; t + 1 < seq.size(); ++t) {
    for (int j = 0; j < kJointCount; ++j) {
      Vec3 d = seq[t + 1].joints[j] - seq[t].joints[j] * 2.0 + seq[t - 1].joints[j];
      acc += d.norm();
    }
  }
  return acc * fps * fps / (double(seq.size() - 2) * kJointCount);
}

double speed_benchmark(const std::function<void()>& method, long total_frames) {
  if (total_frames <= 0) throw DataError("speed_benchmark: total_frames must be positive");
  method();  // warmup
  std::array<double, 3> runs{};
  for (auto& r : runs) {
    auto t0 = std::chrono::steady_clock::now();
    method();
    auto t1 = std::chrono::steady_clock::now();
    r = std::chrono::duration<double>(t1 - t0).count();
  }
  std::sort(runs.begin(), runs.end());
  return runs[1] / double(total_frames);
}

void EvalReport::finalize() {
  aggregate = SeqMetrics{};
  aggregate.name = "aggregate";
  if (per_seq.empty()) return;
  for (const SeqMetrics& s : per_seq) {
    aggregate.v2v_cm += s.v2v_cm;
    aggregate.mpjpe_cm += s.mpjpe_cm;
    aggregate.gmpjpe_cm += s.gmpjpe_cm;
    aggregate.accel_m_s2 += s.accel_m_s2;
    aggregate.sec_per_frame += s.sec_per_frame;
  }
  double n = double(per_seq.size());
  aggregate.v2v_cm /= n;
  aggregate.mpjpe_cm /= n;
  aggregate.gmpjpe_cm /= n;
  aggregate.accel_m_s2 /= n;
  aggregate.sec_per_frame /= n;
}

const char* to_string(Region r) {
  switch (r) {
    case Region::Green: return "green";
    case Region::Yellow: return "yellow";
    default: return "red";
  }
}

ThresholdReport threshold_report(const EvalReport& report, const EvalBaselines& baselines) {
  if (!(baselines.obs_v2v_cm > 0) || !(baselines.gt_accel > 0) || !(baselines.fps > 0))
    throw DataError("threshold_report: baselines must be positive");
  ThresholdReport r;
  r.v2v_ratio = report.aggregate.v2v_cm / baselines.obs_v2v_cm;
  r.accel_ratio = report.aggregate.accel_m_s2 / baselines.gt_accel;
  r.speed_ratio = report.aggregate.sec_per_frame * baselines.fps;
  r.accuracy_pass = r.v2v_ratio <= 2.0 / 3.0;
  r.plausibility_pass = r.accel_ratio >= 0.5 && r.accel_ratio <= 2.0;
  r.speed_pass = r.speed_ratio <= 10.0;
  int passed = int(r.accuracy_pass) + int(r.plausibility_pass) + int(r.speed_pass);
  r.region = passed == 3 ? Region::Green : passed == 2 ? Region::Yellow : Region::Red;
  return r;
}

namespace {

nlohmann::json metrics_json(const SeqMetrics& s) {
  return {{"name", s.name},
          {"v2v_cm", s.v2v_cm},
          {"mpjpe_cm", s.mpjpe_cm},
          {"gmpjpe_cm", s.gmpjpe_cm},
          {"accel_m_s2", s.accel_m_s2},
          {"sec_per_frame", s.sec_per_frame}};
}

}  // namespace

void write_report_json(const EvalReport& report, const ThresholdReport* thresholds,
                       const std::string& path) {
  nlohmann::json j;
  j["aggregate"] = metrics_json(report.aggregate);
  j["per_seq"] = nlohmann::json::array();
  for (const SeqMetrics& s : report.per_seq) j["per_seq"].push_back(metrics_json(s));
  if (thresholds) {
    j["thresholds"] = {{"accuracy_pass", thresholds->accuracy_pass},
                       {"plausibility_pass", thresholds->plausibility_pass},
                       {"speed_pass", thresholds->speed_pass},
                       {"v2v_ratio", thresholds->v2v_ratio},
                       {"accel_ratio", thresholds->accel_ratio},
                       {"speed_ratio", thresholds->speed_ratio},
                       {"region", to_string(thresholds->region)}};
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot open report for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw DataError("failed writing report: " + path);
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open report for writing: " + path);
  f << "name,v2v_cm,mpjpe_cm,gmpjpe_cm,accel_m_s2,sec_per_frame\n";
  auto row = [&](const SeqMetrics& s) {
    f << s.name << "," << s.v2v_cm << "," << s.mpjpe_cm << "," << s.gmpjpe_cm << ","
      << s.accel_m_s2 << "," << s.sec_per_frame << "\n";
  };
  for (const SeqMetrics& s : report.per_seq) row(s);
  row(report.aggregate);
  if (!f) throw DataError("failed writing report: " + path);
}

}  // namespace mdn
