#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mdn/kinematics.hpp"

namespace mdn {

struct MotionSequence {
  double fps = 30.0;
  std::array<double, kShapeDim> betas{};
  std::vector<RawFrame> frames;
};

enum class MotionKind { Walk, Wave, Squat, SmoothRandom };

MotionKind motion_kind_from_string(const std::string& s);
std::string to_string(MotionKind k);

// Procedural generators: periodic gait with phase-coupled root translation,
// localized arm oscillation, vertical root + knee flexion, and low-passed
// Gaussian angle trajectories. Joint angles stay within [-2.5, 2.5] rad.
MotionSequence generate_motion(MotionKind kind, double duration_s, double fps,
                               const BodyShape& shape, std::uint64_t seed);

// JSON motion files; floats survive a save/load round trip bit exactly.
void save_motion(const MotionSequence& seq, const std::string& path);
MotionSequence load_motion(const std::string& path);

// Kinematic states with per-frame velocity deltas / observed 3D points per frame.
std::vector<PoseState> motion_states(const MotionSequence& seq);
std::vector<Observation3D> motion_observations(const MotionSequence& seq);

struct CorpusSpec {
  int n_train = 200;
  int n_val = 25;
  int n_test = 25;
  double duration_s = 2.0;
  double fps = 30.0;
  std::uint64_t seed = 1;
  // cycled round-robin over the generated sequences
  std::vector<MotionKind> kinds = {MotionKind::Walk, MotionKind::Wave, MotionKind::Squat,
                                   MotionKind::SmoothRandom};
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  double sigma = 0.0;  // 0 for clean corpora
  bool corrupt_root = true;
  double baseline_v2v_cm = 0.0;   // noisy-vs-clean error on the test split
  std::string clean_manifest;     // path relative to dir, noisy corpora only
  std::map<std::string, std::vector<std::string>> splits;  // split -> paths relative to dir
  std::map<std::string, std::string> clean_twin;           // noisy path -> clean path
  std::string dir;                // directory holding the manifest; not serialized
};

void save_manifest(const CorpusManifest& m, const std::string& path);
CorpusManifest load_manifest(const std::string& path);

// Writes <out_dir>/{train,val,test}/seq_*.json plus manifest.json. Kinds cycle
// round-robin; betas drawn uniform in [-2, 2] per sequence.
CorpusManifest build_corpus(const CorpusSpec& spec, const std::string& out_dir);

// Noise-corrupted twin of an existing corpus: same tree layout under out_dir,
// rotations perturbed with N(0, sigma^2), translations untouched.
CorpusManifest build_noisy_corpus(const std::string& clean_manifest_path, double sigma,
                                  std::uint64_t seed, const std::string& out_dir,
                                  bool corrupt_root = true);

std::vector<MotionSequence> load_split(const CorpusManifest& m, const std::string& split);

}  // namespace mdn
