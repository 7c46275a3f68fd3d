#include "mdn/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "mdn/errors.hpp"
#include "mdn/metrics.hpp"
#include "mdn/rng.hpp"

namespace fs = std::filesystem;

namespace mdn {

namespace {

using std::numbers::pi;

// Pose-array indices (joint index minus one; the root is not in the array).
namespace jp {
constexpr int kLHip = 0, kRHip = 1, kSpine1 = 2, kLKnee = 3, kRKnee = 4, kSpine2 = 5;
constexpr int kLAnkle = 6, kRAnkle = 7, kSpine3 = 8, kNeck = 11;
constexpr int kLShoulder = 15, kRShoulder = 16, kLElbow = 17, kRElbow = 18;
constexpr int kLWrist = 19, kRWrist = 20;
}  // namespace jp

constexpr double kAngleBound = 2.5;

// Smooth squash keeping every angle strictly inside [-2.5, 2.5] without
// kinking accelerations the way a hard clamp would.
double soft_bound(double v) { return kAngleBound * std::tanh(v / kAngleBound); }

void bound_angles(RawFrame& f) {
  f.root_orient = {soft_bound(f.root_orient.x), soft_bound(f.root_orient.y),
                   soft_bound(f.root_orient.z)};
  for (Vec3& p : f.pose) p = {soft_bound(p.x), soft_bound(p.y), soft_bound(p.z)};
}

MotionSequence make_seq(double fps, const BodyShape& shape, int n_frames) {
  MotionSequence s;
  s.fps = fps;
  s.betas = shape.beta;
  s.frames.resize(n_frames);
  return s;
}

MotionSequence gen_walk(int n_frames, double fps, const BodyShape& shape, Rng& rng) {
  MotionSequence s = make_seq(fps, shape, n_frames);
  double f = rng.uniform(0.8, 1.1);
  double hip_amp = rng.uniform(0.4, 0.6);
  double knee_amp = rng.uniform(0.55, 0.8);
  double arm_amp = rng.uniform(0.3, 0.5);
  double phase0 = rng.uniform(0.0, 2 * pi);
  double yaw = rng.uniform(-0.5, 0.5);
  double speed = rng.uniform(0.9, 1.3);
  double bob = rng.uniform(0.03, 0.05);
  Vec3 fwd{std::sin(yaw), 0, std::cos(yaw)};
  Vec3 side{std::cos(yaw), 0, -std::sin(yaw)};
  for (int i = 0; i < n_frames; ++i) {
    double t = i / fps;
    double p = 2 * pi * f * t + phase0;
    RawFrame& fr = s.frames[i];
    fr.pose[jp::kLHip].x = hip_amp * std::sin(p);
    fr.pose[jp::kRHip].x = hip_amp * std::sin(p + pi);
    fr.pose[jp::kLKnee].x = knee_amp * 0.5 * (1 - std::cos(p + 0.9));
    fr.pose[jp::kRKnee].x = knee_amp * 0.5 * (1 - std::cos(p + pi + 0.9));
    fr.pose[jp::kLAnkle].x = 0.2 * std::sin(p + 0.5 * pi);
    fr.pose[jp::kRAnkle].x = 0.2 * std::sin(p + 1.5 * pi);
    fr.pose[jp::kLShoulder].x = arm_amp * std::sin(p + pi);
    fr.pose[jp::kRShoulder].x = arm_amp * std::sin(p);
    fr.pose[jp::kLElbow].x = 0.25 + 0.15 * std::sin(p + pi);
    fr.pose[jp::kRElbow].x = 0.25 + 0.15 * std::sin(p);
    fr.pose[jp::kSpine1].y = 0.06 * std::sin(p);
    fr.pose[jp::kNeck].x = 0.04 * std::sin(2 * p);
    fr.trans = fwd * (speed * t) + side * (0.03 * std::sin(p)) + Vec3{0, bob * std::sin(2 * p), 0};
    fr.root_orient = {0.03 * std::sin(2 * p), yaw + 0.06 * std::sin(p), 0.02 * std::sin(p)};
    bound_angles(fr);
  }
  return s;
}

MotionSequence gen_wave(int n_frames, double fps, const BodyShape& shape, Rng& rng) {
  MotionSequence s = make_seq(fps, shape, n_frames);
  double f = rng.uniform(2.0, 2.8);
  double amp = rng.uniform(0.55, 0.75);
  double phase0 = rng.uniform(0.0, 2 * pi);
  double yaw = rng.uniform(-0.5, 0.5);
  double sway_f = rng.uniform(0.6, 0.9);
  for (int i = 0; i < n_frames; ++i) {
    double t = i / fps;
    double p = 2 * pi * f * t + phase0;
    double q = 2 * pi * sway_f * t + 0.3 * phase0;
    RawFrame& fr = s.frames[i];
    fr.pose[jp::kRShoulder].z = -1.1 + 0.2 * std::sin(p);
    fr.pose[jp::kRElbow].y = amp * std::sin(p);
    fr.pose[jp::kRWrist].y = 0.35 * std::sin(p + 0.5);
    fr.pose[jp::kLShoulder].x = 0.12 * std::sin(q);
    fr.pose[jp::kLElbow].x = 0.2 + 0.1 * std::sin(q);
    fr.pose[jp::kSpine1].x = 0.06 * std::sin(q);
    fr.pose[jp::kSpine2].z = 0.05 * std::sin(q + 0.7);
    fr.pose[jp::kNeck].x = 0.06 * std::sin(q + 1.1);
    fr.trans = {0.015 * std::sin(q), 0.008 * std::sin(2 * q), 0.015 * std::cos(q)};
    fr.root_orient = {0.03 * std::sin(q), yaw + 0.04 * std::sin(q), 0.02 * std::cos(q)};
    bound_angles(fr);
  }
  return s;
}

MotionSequence gen_squat(int n_frames, double fps, const BodyShape& shape, Rng& rng) {
  MotionSequence s = make_seq(fps, shape, n_frames);
  double f = rng.uniform(0.7, 0.95);
  double depth = rng.uniform(0.16, 0.24);
  double phase0 = rng.uniform(0.0, 2 * pi);
  double yaw = rng.uniform(-0.5, 0.5);
  for (int i = 0; i < n_frames; ++i) {
    double t = i / fps;
    double c = 0.5 * (1 - std::cos(2 * pi * f * t + phase0));
    RawFrame& fr = s.frames[i];
    fr.pose[jp::kLKnee].x = 1.25 * c;
    fr.pose[jp::kRKnee].x = 1.25 * c;
    fr.pose[jp::kLHip].x = -0.6 * c;
    fr.pose[jp::kRHip].x = -0.6 * c;
    fr.pose[jp::kLAnkle].x = 0.4 * c;
    fr.pose[jp::kRAnkle].x = 0.4 * c;
    fr.pose[jp::kSpine1].x = -0.12 * c;
    fr.pose[jp::kSpine3].x = -0.08 * c;
    fr.pose[jp::kLShoulder].x = -0.9 * c;
    fr.pose[jp::kRShoulder].x = -0.9 * c;
    fr.pose[jp::kLElbow].x = 0.25 * c;
    fr.pose[jp::kRElbow].x = 0.25 * c;
    fr.trans = {0, -depth * c, 0};
    fr.root_orient = {0, yaw, 0};
    bound_angles(fr);
  }
  return s;
}

MotionSequence gen_smooth_random(int n_frames, double fps, const BodyShape& shape, Rng& rng) {
  MotionSequence s = make_seq(fps, shape, n_frames);
  double f_c = rng.uniform(0.4, 0.7);
  double a = std::exp(-2 * pi * f_c / fps);
  int burn = 4 * n_frames;

  // One smooth channel: white noise through a 4-pole low-pass, rescaled to amp
  // and offset by base. Four poles keep the renormalized signal band-limited
  // enough for human-scale accelerations.
  auto channel = [&](std::uint64_t stream, double amp, double base) {
    Rng cr = rng.fork(stream);
    std::vector<double> out(n_frames);
    std::array<double, 4> st{};
    for (int i = -burn; i < n_frames; ++i) {
      double x = cr.normal();
      for (double& sj : st) {
        sj = a * sj + (1 - a) * x;
        x = sj;
      }
      if (i >= 0) out[i] = x;
    }
    double mean = 0, var = 0;
    for (double v : out) mean += v;
    mean /= n_frames;
    for (double v : out) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / n_frames);
    double k = sd > 1e-9 ? amp / sd : 0.0;
    for (double& v : out) v = base + k * (v - mean);
    return out;
  };

  double yaw = rng.uniform(-0.5, 0.5);
  std::vector<std::vector<double>> pose_ch(kPoseDim);
  for (int c = 0; c < kPoseDim; ++c) {
    int j = c / 3;
    bool torso = j == jp::kSpine1 || j == jp::kSpine2 || j == jp::kSpine3 || j == jp::kNeck;
    double amp = torso ? 0.12 : 0.3;
    double base = rng.uniform(-0.25, 0.25);
    pose_ch[c] = channel(100 + c, amp, base);
  }
  std::array<std::vector<double>, 3> orient_ch = {channel(400, 0.1, 0.0), channel(401, 0.1, yaw),
                                                  channel(402, 0.1, 0.0)};
  std::array<std::vector<double>, 3> trans_ch = {channel(500, 0.1, 0.0), channel(501, 0.06, 0.0),
                                                 channel(502, 0.1, 0.0)};

  for (int i = 0; i < n_frames; ++i) {
    RawFrame& fr = s.frames[i];
    for (int j = 0; j < kJointCount - 1; ++j)
      fr.pose[j] = {pose_ch[3 * j][i], pose_ch[3 * j + 1][i], pose_ch[3 * j + 2][i]};
    fr.root_orient = {orient_ch[0][i], orient_ch[1][i], orient_ch[2][i]};
    fr.trans = {trans_ch[0][i], trans_ch[1][i], trans_ch[2][i]};
    bound_angles(fr);
  }
  return s;
}

}  // namespace

MotionKind motion_kind_from_string(const std::string& s) {
  if (s == "walk") return MotionKind::Walk;
  if (s == "wave") return MotionKind::Wave;
  if (s == "squat") return MotionKind::Squat;
  if (s == "smooth_random") return MotionKind::SmoothRandom;
  throw DataError("unknown motion kind '" + s + "' (valid: walk, wave, squat, smooth_random)");
}

std::string to_string(MotionKind k) {
  switch (k) {
    case MotionKind::Walk: return "walk";
    case MotionKind::Wave: return "wave";
    case MotionKind::Squat: return "squat";
    default: return "smooth_random";
  }
}

MotionSequence generate_motion(MotionKind kind, double duration_s, double fps,
                               const BodyShape& shape, std::uint64_t seed) {
  if (!(duration_s > 0)) throw DataError("generate_motion: duration must be positive");
  if (!(fps > 0)) throw DataError("generate_motion: fps must be positive");
  int n_frames = int(std::lround(duration_s * fps));
  if (n_frames < 1) n_frames = 1;
  Rng rng(seed);
  switch (kind) {
    case MotionKind::Walk: return gen_walk(n_frames, fps, shape, rng);
    case MotionKind::Wave: return gen_wave(n_frames, fps, shape, rng);
    case MotionKind::Squat: return gen_squat(n_frames, fps, shape, rng);
    default: return gen_smooth_random(n_frames, fps, shape, rng);
  }
}

namespace {

nlohmann::json vec3_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

std::vector<double> require_numbers(const nlohmann::json& j, const char* field, std::size_t n,
                                    const std::string& ctx) {
  if (!j.contains(field))
    throw DataError(ctx + ": missing field '" + field + "'");
  const nlohmann::json& a = j.at(field);
  if (!a.is_array())
    throw DataError(ctx + ": field '" + field + "' must be an array");
  if (a.size() != n)
    throw DataError(ctx + ": field '" + field + "' must have " + std::to_string(n) +
                    " values, got " + std::to_string(a.size()));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!a[i].is_number())
      throw DataError(ctx + ": field '" + field + "' holds a non-number at index " +
                      std::to_string(i));
    out[i] = a[i].get<double>();
    if (!std::isfinite(out[i]))
      throw DataError(ctx + ": non-finite value in '" + field + "'");
  }
  return out;
}

}  // namespace

void save_motion(const MotionSequence& seq, const std::string& path) {
  nlohmann::json j;
  j["fps"] = seq.fps;
  j["betas"] = seq.betas;
  nlohmann::json frames = nlohmann::json::array();
  for (const RawFrame& f : seq.frames) {
    nlohmann::json jf;
    jf["trans"] = vec3_json(f.trans);
    jf["root_orient"] = vec3_json(f.root_orient);
    nlohmann::json pose = nlohmann::json::array();
    for (const Vec3& p : f.pose) {
      pose.push_back(p.x);
      pose.push_back(p.y);
      pose.push_back(p.z);
    }
    jf["pose_body"] = std::move(pose);
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open motion file for writing: " + path);
  out << j.dump() << "\n";
  if (!out) throw DataError("failed writing motion file: " + path);
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open motion file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed motion file " + path + ": " + e.what());
  }
  std::string ctx = "motion file " + path;
  if (!j.contains("fps")) throw DataError(ctx + ": missing field 'fps'");
  if (!j["fps"].is_number()) throw DataError(ctx + ": field 'fps' must be a number");
  MotionSequence seq;
  seq.fps = j["fps"].get<double>();
  if (!(seq.fps > 0) || !std::isfinite(seq.fps))
    throw DataError(ctx + ": field 'fps' must be positive and finite");
  std::vector<double> betas = require_numbers(j, "betas", kShapeDim, ctx);
  std::copy(betas.begin(), betas.end(), seq.betas.begin());
  if (!j.contains("frames") || !j["frames"].is_array())
    throw DataError(ctx + ": missing field 'frames'");
  seq.frames.reserve(j["frames"].size());
  for (std::size_t i = 0; i < j["frames"].size(); ++i) {
    std::string fctx = ctx + ": frames[" + std::to_string(i) + "]";
    const nlohmann::json& jf = j["frames"][i];
    if (!jf.is_object()) throw DataError(fctx + ": must be an object");
    std::vector<double> tr = require_numbers(jf, "trans", 3, fctx);
    std::vector<double> ro = require_numbers(jf, "root_orient", 3, fctx);
    std::vector<double> pb = require_numbers(jf, "pose_body", kPoseDim, fctx);
    RawFrame f;
    f.trans = {tr[0], tr[1], tr[2]};
    f.root_orient = {ro[0], ro[1], ro[2]};
    for (int k = 0; k < kJointCount - 1; ++k)
      f.pose[k] = {pb[3 * k], pb[3 * k + 1], pb[3 * k + 2]};
    seq.frames.push_back(f);
  }
  return seq;
}

std::vector<PoseState> motion_states(const MotionSequence& seq) {
  return compute_velocities(seq.frames);
}

std::vector<Observation3D> motion_observations(const MotionSequence& seq) {
  BodyShape shape{seq.betas};
  std::vector<Observation3D> out;
  out.reserve(seq.frames.size());
  for (const PoseState& st : motion_states(seq)) out.push_back(forward_kinematics(st, shape));
  return out;
}

void save_manifest(const CorpusManifest& m, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["seed"] = m.seed;
  j["sigma"] = m.sigma;
  j["corrupt_root"] = m.corrupt_root;
  j["baseline_v2v_cm"] = m.baseline_v2v_cm;
  j["clean_manifest"] = m.clean_manifest;
  j["splits"] = m.splits;
  j["clean_twin"] = m.clean_twin;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open manifest for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("failed writing manifest: " + path);
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path + ": " + e.what());
  }
  std::string ctx = "manifest " + path;
  CorpusManifest m;
  try {
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
      throw DataError(ctx + ": missing or unsupported format_version");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sigma = j.at("sigma").get<double>();
    m.corrupt_root = j.at("corrupt_root").get<bool>();
    m.baseline_v2v_cm = j.at("baseline_v2v_cm").get<double>();
    m.clean_manifest = j.at("clean_manifest").get<std::string>();
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    m.clean_twin = j.at("clean_twin").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(ctx + ": " + e.what());
  }
  std::set<std::string> seen;
  for (const auto& [split, files] : m.splits)
    for (const std::string& f : files)
      if (!seen.insert(f).second) throw DataError(ctx + ": splits overlap on " + f);
  m.dir = fs::path(path).parent_path().string();
  return m;
}

CorpusManifest build_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0)
    throw DataError("build_corpus: split sizes must be non-negative");
  if (spec.kinds.empty()) throw DataError("build_corpus: kinds must not be empty");
  const std::array<std::pair<std::string, int>, 3> split_sizes = {
      {{"train", spec.n_train}, {"val", spec.n_val}, {"test", spec.n_test}}};
  const std::vector<MotionKind>& kinds = spec.kinds;
  CorpusManifest m;
  m.seed = spec.seed;
  m.dir = out_dir;
  Rng root(spec.seed);
  int idx = 0;
  for (const auto& [split, count] : split_sizes) {
    fs::create_directories(fs::path(out_dir) / split);
    for (int k = 0; k < count; ++k, ++idx) {
      MotionKind kind = kinds[idx % kinds.size()];
      Rng beta_rng = root.fork(idx);
      BodyShape shape;
      for (double& b : shape.beta) b = beta_rng.uniform(-2.0, 2.0);
      MotionSequence seq = generate_motion(kind, spec.duration_s, spec.fps, shape,
                                           splitmix64(spec.seed ^ splitmix64(0xC09B05 + idx)));
      char name[64];
      std::snprintf(name, sizeof(name), "seq_%03d_%s.json", idx, to_string(kind).c_str());
      std::string rel = split + "/" + name;
      save_motion(seq, (fs::path(out_dir) / rel).string());
      m.splits[split].push_back(rel);
    }
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return m;
}

CorpusManifest build_noisy_corpus(const std::string& clean_manifest_path, double sigma,
                                  std::uint64_t seed, const std::string& out_dir,
                                  bool corrupt_root) {
  if (sigma < 0) throw DataError("build_noisy_corpus: sigma must be non-negative");
  CorpusManifest clean = load_manifest(clean_manifest_path);
  CorpusManifest m;
  m.seed = seed;
  m.sigma = sigma;
  m.corrupt_root = corrupt_root;
  m.dir = out_dir;
  fs::create_directories(out_dir);
  m.clean_manifest = fs::relative(fs::absolute(clean_manifest_path), fs::absolute(out_dir)).string();

  double v2v_sum = 0;
  int v2v_count = 0;
  int idx = 0;
  for (const auto& [split, files] : clean.splits) {
    for (const std::string& rel : files) {
      fs::path clean_path = fs::path(clean.dir) / rel;
      MotionSequence clean_seq = load_motion(clean_path.string());
      MotionSequence noisy = clean_seq;
      noisy.frames = inject_pose_noise(clean_seq.frames, sigma,
                                       splitmix64(seed ^ splitmix64(0x5EA51DE + idx)), corrupt_root);
      fs::path noisy_path = fs::path(out_dir) / rel;
      fs::create_directories(noisy_path.parent_path());
      save_motion(noisy, noisy_path.string());
      m.splits[split].push_back(rel);
      m.clean_twin[rel] = fs::relative(fs::absolute(clean_path), fs::absolute(out_dir)).string();
      if (split == "test") {
        v2v_sum += v2v_cm(motion_observations(noisy), motion_observations(clean_seq));
        ++v2v_count;
      }
      ++idx;
    }
  }
  if (v2v_count > 0) m.baseline_v2v_cm = v2v_sum / v2v_count;
  save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return m;
}

std::vector<MotionSequence> load_split(const CorpusManifest& m, const std::string& split) {
  auto it = m.splits.find(split);
  if (it == m.splits.end()) throw DataError("manifest has no split '" + split + "'");
  std::vector<MotionSequence> out;
  out.reserve(it->second.size());
  for (const std::string& rel : it->second)
    out.push_back(load_motion((fs::path(m.dir) / rel).string()));
  return out;
}

}  // namespace mdn
