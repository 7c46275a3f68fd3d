// mdn: corpus generation, prior/denoiser training, denoising, trajectory
// fitting and evaluation from one binary. Exit codes: 0 success, 1 usage,
// 2 bad data, 3 numeric failure.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdn/corpus.hpp"
#include "mdn/denoiser.hpp"
#include "mdn/errors.hpp"
#include "mdn/metrics.hpp"
#include "mdn/motion_vae.hpp"
#include "mdn/rng.hpp"
#include "mdn/trajectory_fit.hpp"

namespace fs = std::filesystem;
using namespace mdn;

namespace {

std::vector<int> g_lock_fds;  // held until process exit

std::string resolve_out(const std::string& out) {
  const char* root = std::getenv("MDN_OUT_ROOT");
  fs::path p(out);
  if (root && *root && p.is_relative()) p = fs::path(root) / p;
  return p.string();
}

// Creates the directory and takes an exclusive advisory lock for the life of
// the process, so two runs cannot interleave writes into the same output.
std::string prepare_out_dir(const std::string& out_flag) {
  std::string dir = resolve_out(out_flag);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  std::string lock_path = dir + "/.lock";
  int fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd < 0) throw DataError("cannot open lock file " + lock_path);
  if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd);
    throw DataError("another run is writing to " + dir + " (lock file " + lock_path + ")");
  }
  g_lock_fds.push_back(fd);
  return dir;
}

// Written as a section so the file can be fed straight back to --config,
// which lives on the top-level app (CLI11 only processes config files there).
void write_resolved_config(const CLI::App& sub, const std::string& dir) {
  std::ofstream f(dir + "/run_config.ini");
  f << "[" << sub.get_name() << "]\n";
  std::istringstream body(sub.config_to_str(true, true));
  std::string line;
  while (std::getline(body, line)) {
    if (line.size() > 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0)
      continue;  // empty values round-trip poorly and carry no information
    f << line << "\n";
  }
}

void require_file(const std::string& path, const std::string& what,
                  const std::string& hint = "") {
  if (fs::exists(path)) return;
  std::string msg = what + " not found: " + path;
  if (!hint.empty()) msg += " (" + hint + ")";
  throw DataError(msg);
}

void write_loss_csv(const std::string& path, const std::vector<double>& train,
                    const std::vector<std::pair<int, double>>& val) {
  std::ofstream f(path);
  f << "step,split,loss\n";
  f.precision(17);
  for (std::size_t i = 0; i < train.size(); ++i)
    f << i << ",train," << train[i] << "\n";
  for (const auto& [step, loss] : val) f << step << ",val," << loss << "\n";
}

// One split of a noisy corpus together with its clean counterparts.
struct SplitData {
  std::vector<std::string> rel;
  std::vector<MotionSequence> noisy;
  std::vector<MotionSequence> clean;
};

SplitData load_split_with_twins(const CorpusManifest& m, const std::string& split) {
  auto it = m.splits.find(split);
  if (it == m.splits.end() || it->second.empty()) {
    std::string have;
    for (const auto& [k, v] : m.splits) have += (have.empty() ? "" : ", ") + k;
    throw DataError("split '" + split + "' not in manifest (have: " + have + ")");
  }
  SplitData s;
  for (const std::string& rel : it->second) {
    auto tw = m.clean_twin.find(rel);
    if (tw == m.clean_twin.end())
      throw DataError("no clean counterpart recorded for " + rel +
                      "; point --corpus at a noisy corpus built by gen-corpus --sigma");
    s.rel.push_back(rel);
    s.noisy.push_back(load_motion((fs::path(m.dir) / rel).string()));
    s.clean.push_back(load_motion((fs::path(m.dir) / tw->second).string()));
  }
  return s;
}

SeqMetrics seq_metrics(const std::string& name, const std::vector<Observation3D>& pred,
                       const std::vector<Observation3D>& gt, double fps,
                       double sec_per_frame) {
  SeqMetrics sm;
  sm.name = name;
  sm.v2v_cm = v2v_cm(pred, gt);
  sm.mpjpe_cm = mpjpe_cm(pred, gt, MpjpeMode::Local);
  sm.gmpjpe_cm = mpjpe_cm(pred, gt, MpjpeMode::Global);
  sm.accel_m_s2 = mean_joint_accel(pred, fps);
  sm.sec_per_frame = sec_per_frame;
  return sm;
}

EvalBaselines split_baselines(const SplitData& s) {
  EvalBaselines b;
  b.fps = s.clean.empty() ? 30.0 : s.clean[0].fps;
  double v2v = 0, accel = 0;
  for (std::size_t i = 0; i < s.noisy.size(); ++i) {
    auto gt = motion_observations(s.clean[i]);
    v2v += v2v_cm(motion_observations(s.noisy[i]), gt);
    accel += mean_joint_accel(gt, s.clean[i].fps);
  }
  b.obs_v2v_cm = v2v / double(s.noisy.size());
  b.gt_accel = accel / double(s.noisy.size());
  return b;
}

MotionSequence states_to_motion(const std::vector<Tensor>& states,
                                const MotionSequence& src) {
  MotionSequence out;
  out.fps = src.fps;
  out.betas = src.betas;
  for (const Tensor& st : states) {
    PoseState ps = PoseState::from_vec(st);
    RawFrame f;
    f.trans = ps.r;
    f.root_orient = ps.phi;
    f.pose = ps.theta;
    out.frames.push_back(f);
  }
  return out;
}

std::string sigma_tag(double sigma) {
  std::ostringstream os;
  os << sigma;
  return os.str();
}

void print_thresholds(const ThresholdReport& tr) {
  std::printf("v2v ratio %.3f (%s), accel ratio %.3f (%s), speed ratio %.3f (%s) -> %s\n",
              tr.v2v_ratio, tr.accuracy_pass ? "pass" : "fail", tr.accel_ratio,
              tr.plausibility_pass ? "pass" : "fail", tr.speed_ratio,
              tr.speed_pass ? "pass" : "fail", to_string(tr.region));
}

// ---- gen-corpus ----

struct GenCorpusArgs {
  std::string out;
  int n_train = 200, n_val = 25, n_test = 25;
  double duration = 2.0, fps = 30.0;
  std::uint64_t seed = 1;
  std::vector<double> sigmas;
  bool corrupt_root = true;
  std::vector<std::string> kinds;
};

void run_gen_corpus(const CLI::App& sub, GenCorpusArgs& a) {
  std::string dir = prepare_out_dir(a.out);
  write_resolved_config(sub, dir);

  CorpusSpec spec;
  spec.n_train = a.n_train;
  spec.n_val = a.n_val;
  spec.n_test = a.n_test;
  spec.duration_s = a.duration;
  spec.fps = a.fps;
  spec.seed = a.seed;
  if (!a.kinds.empty()) {
    spec.kinds.clear();
    for (const std::string& k : a.kinds) spec.kinds.push_back(motion_kind_from_string(k));
  }

  std::string clean_dir = (fs::path(dir) / "clean").string();
  CorpusManifest clean = build_corpus(spec, clean_dir);
  int total = a.n_train + a.n_val + a.n_test;
  std::printf("clean corpus: %d sequences -> %s\n", total,
              (fs::path(clean_dir) / "manifest.json").c_str());

  for (std::size_t i = 0; i < a.sigmas.size(); ++i) {
    double sig = a.sigmas[i];
    std::string noisy_dir = (fs::path(dir) / ("noisy_sigma_" + sigma_tag(sig))).string();
    CorpusManifest noisy = build_noisy_corpus(
        (fs::path(clean_dir) / "manifest.json").string(), sig,
        splitmix64(a.seed ^ splitmix64(7000 + i)), noisy_dir, a.corrupt_root);
    std::printf("noisy twin sigma=%g: baseline test v2v %.2f cm -> %s\n", sig,
                noisy.baseline_v2v_cm, (fs::path(noisy_dir) / "manifest.json").c_str());
  }
}

// ---- train-prior ----

struct TrainPriorArgs {
  std::string corpus, out, init;
  DvaeConfig arch;
  PriorTrainConfig train;
};

void run_train_prior(const CLI::App& sub, TrainPriorArgs& a) {
  require_file(a.corpus, "corpus manifest", "run gen-corpus first");
  if (!a.init.empty()) require_file(a.init, "checkpoint to resume from");
  std::string dir = prepare_out_dir(a.out);
  write_resolved_config(sub, dir);

  CorpusManifest m = load_manifest(a.corpus);
  std::vector<MotionSequence> train = load_split(m, "train");
  std::vector<MotionSequence> val = load_split(m, "val");

  DvaeModel model =
      a.init.empty() ? DvaeModel::init(a.arch, a.train.seed) : DvaeModel::load(a.init);
  if (!a.init.empty())
    std::printf("resuming from %s (architecture flags ignored)\n", a.init.c_str());

  PriorTrainLog log = train_prior(model, train, val, a.train);
  model.save((fs::path(dir) / "prior.json").string());
  write_loss_csv((fs::path(dir) / "loss_curve.csv").string(), log.train_loss, log.val_loss);
  std::printf("prior: %zu steps, final val loss %.6f -> %s\n", log.train_loss.size(),
              log.val_loss.empty() ? 0.0 : log.val_loss.back().second,
              (fs::path(dir) / "prior.json").c_str());
}

// ---- train-denoiser ----

struct TrainDenoiserArgs {
  std::string prior, corpus, out, init;
  DenoiserConfig noise;
  DenoiserTrainConfig train;
};

void run_train_denoiser(const CLI::App& sub, TrainDenoiserArgs& a) {
  require_file(a.prior, "prior checkpoint", "run train-prior first");
  require_file(a.corpus, "corpus manifest", "run gen-corpus with --sigma first");
  if (!a.init.empty()) require_file(a.init, "checkpoint to resume from");
  std::string dir = prepare_out_dir(a.out);
  write_resolved_config(sub, dir);

  DvaeModel prior = DvaeModel::load(a.prior);
  CorpusManifest m = load_manifest(a.corpus);
  std::vector<MotionSequence> train = load_split(m, "train");
  std::vector<MotionSequence> val = load_split(m, "val");

  DenoiserModel model = a.init.empty()
                            ? DenoiserModel::from_prior(prior, a.noise, a.train.seed)
                            : DenoiserModel::load(a.init);
  if (!a.init.empty())
    std::printf("resuming from %s (noise-model flags ignored)\n", a.init.c_str());

  DenoiserTrainLog log = train_denoiser(model, train, val, a.train);

  if (!model.params.groups_bitwise_equal(prior.params, generative_groups()))
    throw NumericError("trained denoiser drifted from the prior's generative parameters");

  model.save((fs::path(dir) / "denoiser.json").string());
  write_loss_csv((fs::path(dir) / "loss_curve.csv").string(), log.train_loss, log.val_loss);
  std::printf("denoiser: %zu steps, final val loss %.6f -> %s\n", log.train_loss.size(),
              log.val_loss.empty() ? 0.0 : log.val_loss.back().second,
              (fs::path(dir) / "denoiser.json").c_str());
}

// ---- denoise ----

struct DenoiseArgs {
  std::string model, corpus, out;
  std::string split = "test";
  std::string mode = "regression";
  std::string output = "blend";
  int iters = 50;
  int n_samples = 10;
  double opt_lr = 1e-4;
  std::uint64_t seed = 0;
};

void run_denoise(const CLI::App& sub, DenoiseArgs& a) {
  require_file(a.model, "denoiser checkpoint", "run train-denoiser first");
  require_file(a.corpus, "corpus manifest");
  std::string dir = prepare_out_dir(a.out);
  write_resolved_config(sub, dir);

  DenoiserModel model = DenoiserModel::load(a.model);
  CorpusManifest m = load_manifest(a.corpus);
  SplitData data = load_split_with_twins(m, a.split);
  DenoiseOutput out_kind =
      a.output == "blend" ? DenoiseOutput::Blend : DenoiseOutput::PurePrior;

  std::vector<NoisyObservationSeq> y_set;
  long total_frames = 0;
  for (const MotionSequence& seq : data.noisy) {
    y_set.push_back(NoisyObservationSeq::from_motion(seq));
    total_frames += long(seq.frames.size());
  }

  std::vector<DenoiseResult> results(y_set.size());
  std::vector<double> spf(y_set.size(), 0.0);
  using clock = std::chrono::steady_clock;
  if (a.mode == "optimization") {
    if (a.iters == 0)
      std::fprintf(stderr, "warning: optimization with --iters 0 is plain regression\n");
    DenoiseOptConfig oc;
    oc.lr = a.opt_lr;
    oc.n_samples = a.n_samples;
    oc.seed = a.seed;
    oc.output = out_kind;
    auto t0 = clock::now();
    DenoiseOptResult opt = denoise_optimization(model, y_set, a.iters, oc);
    double sec = std::chrono::duration<double>(clock::now() - t0).count();
    results = std::move(opt.results);
    std::fill(spf.begin(), spf.end(), sec / double(total_frames));
    if (opt.stopped_early)
      std::fprintf(stderr, "warning: adaptation stopped early, kept best iterate\n");
  } else {
    for (std::size_t i = 0; i < y_set.size(); ++i) {
      std::uint64_t s = splitmix64(a.seed ^ splitmix64(1000 + i));
      auto t0 = clock::now();
      results[i] = denoise_regression(model, y_set[i], a.n_samples, s, out_kind);
      double sec = std::chrono::duration<double>(clock::now() - t0).count();
      spf[i] = sec / double(data.noisy[i].frames.size());
    }
  }

  fs::create_directories(fs::path(dir) / "denoised");
  EvalReport report;
  for (std::size_t i = 0; i < results.size(); ++i) {
    MotionSequence den = states_to_motion(results[i].states, data.noisy[i]);
    std::string name = fs::path(data.rel[i]).filename().string();
    save_motion(den, (fs::path(dir) / "denoised" / name).string());
    report.per_seq.push_back(seq_metrics(data.rel[i], results[i].points,
                                         motion_observations(data.clean[i]),
                                         data.clean[i].fps, spf[i]));
  }
  report.finalize();
  EvalBaselines baselines = split_baselines(data);
  ThresholdReport tr = threshold_report(report, baselines);
  write_report_json(report, &tr, (fs::path(dir) / "report.json").string());
  write_report_csv(report, (fs::path(dir) / "report.csv").string());
  std::printf("denoised %zu sequences (%s mode) -> %s\n", results.size(), a.mode.c_str(),
              (fs::path(dir) / "denoised").c_str());
  std::printf("v2v %.2f cm vs observed %.2f cm; sec_per_frame %.4g\n",
              report.aggregate.v2v_cm, baselines.obs_v2v_cm, report.aggregate.sec_per_frame);
  print_thresholds(tr);
}

// ---- fit-trajectory ----

struct FitTrajectoryArgs {
  std::string detections, camera, motion, out, truth, model;
  TrajectoryFitConfig fit;
  bool init_from_motion = false;
  bool chain_denoise = false;
  int n_samples = 10;
  std::string output = "blend";
  std::uint64_t seed = 0;
};

void run_fit_trajectory(const CLI::App& sub, FitTrajectoryArgs& a) {
  require_file(a.detections, "detections file");
  require_file(a.camera, "camera file");
  require_file(a.motion, "motion file with local poses");
  if (!a.truth.empty()) require_file(a.truth, "reference motion");
  if (a.chain_denoise) require_file(a.model, "denoiser checkpoint");
  std::string dir = prepare_out_dir(a.out);
  write_resolved_config(sub, dir);

  std::vector<Detection2D> dets = load_detections(a.detections);
  PinholeCamera cam = PinholeCamera::load(a.camera);
  MotionSequence seq = load_motion(a.motion);
  if (dets.size() != seq.frames.size())
    throw DataError("detections have " + std::to_string(dets.size()) + " frames, motion has " +
                    std::to_string(seq.frames.size()));

  std::vector<LocalPose> theta;
  BodyShape shape;
  shape.beta = seq.betas;
  TrajectoryFitConfig cfg = a.fit;
  cfg.phi_init.clear();
  cfg.r_init.clear();
  for (const RawFrame& f : seq.frames) {
    theta.push_back(f.pose);
    cfg.phi_init.push_back(f.root_orient);  // depth heuristic unless told otherwise
    if (a.init_from_motion) cfg.r_init.push_back(f.trans);
  }

  TrajectoryFitResult res = fit_global_trajectory(dets, theta, shape, cam, cfg);

  MotionSequence fitted = seq;
  for (std::size_t t = 0; t < fitted.frames.size(); ++t) {
    fitted.frames[t].trans = res.r[t];
    fitted.frames[t].root_orient = res.phi[t];
  }
  save_motion(fitted, (fs::path(dir) / "fitted.json").string());

  nlohmann::json rep;
  rep["frames"] = dets.size();
  rep["objective"] = res.objective;
  rep["initial_objective"] = res.initial_objective;
  rep["iterations"] = res.iterations;
  rep["converged"] = res.converged;
  std::printf("fit: objective %.6g (from %.6g) in %d iterations\n", res.objective,
              res.initial_objective, res.iterations);
  if (!a.truth.empty()) {
    MotionSequence ref = load_motion(a.truth);
    if (ref.frames.size() != fitted.frames.size())
      throw DataError("reference motion frame count differs from detections");
    double mean_err = 0, max_err = 0;
    for (std::size_t t = 0; t < ref.frames.size(); ++t) {
      double e = (res.r[t] - ref.frames[t].trans).norm();
      mean_err += e;
      max_err = std::max(max_err, e);
    }
    mean_err /= double(ref.frames.size());
    rep["mean_r_error_m"] = mean_err;
    rep["max_r_error_m"] = max_err;
    std::printf("recovery vs reference: mean %.4f m, max %.4f m\n", mean_err, max_err);
  }
  if (a.chain_denoise) {
    DenoiserModel model = DenoiserModel::load(a.model);
    NoisyObservationSeq y = NoisyObservationSeq::from_motion(fitted);
    DenoiseOutput out_kind =
        a.output == "blend" ? DenoiseOutput::Blend : DenoiseOutput::PurePrior;
    DenoiseResult den = denoise_regression(model, y, a.n_samples, a.seed, out_kind);
    MotionSequence den_seq = states_to_motion(den.states, fitted);
    save_motion(den_seq, (fs::path(dir) / "denoised.json").string());
    rep["chained_denoise"] = true;
    std::printf("chained denoise -> %s\n", (fs::path(dir) / "denoised.json").c_str());
  }
  std::ofstream((fs::path(dir) / "fit_report.json").string()) << rep.dump(2) << "\n";
}

// ---- eval ----

struct EvalArgs {
  std::string corpus, pred, out;
  std::string split = "test";
  double sec_per_frame = 0.0;
};

void run_eval(const CLI::App& sub, EvalArgs& a) {
  require_file(a.corpus, "corpus manifest");
  if (!fs::is_directory(a.pred))
    throw DataError("prediction directory not found: " + a.pred);
  std::string dir = prepare_out_dir(a.out);
  write_resolved_config(sub, dir);

  CorpusManifest m = load_manifest(a.corpus);
  SplitData data = load_split_with_twins(m, a.split);

  EvalReport report;
  for (std::size_t i = 0; i < data.rel.size(); ++i) {
    std::string name = fs::path(data.rel[i]).filename().string();
    std::string pred_path = (fs::path(a.pred) / name).string();
    require_file(pred_path, "prediction for " + data.rel[i]);
    MotionSequence pred = load_motion(pred_path);
    report.per_seq.push_back(seq_metrics(data.rel[i], motion_observations(pred),
                                         motion_observations(data.clean[i]),
                                         data.clean[i].fps, a.sec_per_frame));
  }
  report.finalize();
  EvalBaselines baselines = split_baselines(data);
  ThresholdReport tr = threshold_report(report, baselines);
  write_report_json(report, &tr, (fs::path(dir) / "report.json").string());
  write_report_csv(report, (fs::path(dir) / "report.csv").string());
  std::printf("evaluated %zu sequences; v2v %.2f cm vs observed %.2f cm\n",
              report.per_seq.size(), report.aggregate.v2v_cm, baselines.obs_v2v_cm);
  print_thresholds(tr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motion denoising toolkit: synthetic corpora, a learned motion prior,"
               " unsupervised denoising, and global trajectory fitting"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Read options from an INI file with a [subcommand] section");

  GenCorpusArgs gen;
  CLI::App* sub_gen = app.add_subcommand("gen-corpus", "Generate a clean corpus and optional noisy twins");
  sub_gen->fallthrough();
  sub_gen->add_option("--out", gen.out, "Output directory")->required();
  sub_gen->add_option("--n-train", gen.n_train, "Training sequences")->capture_default_str();
  sub_gen->add_option("--n-val", gen.n_val, "Validation sequences")->capture_default_str();
  sub_gen->add_option("--n-test", gen.n_test, "Test sequences")->capture_default_str();
  sub_gen->add_option("--duration", gen.duration, "Seconds per sequence")->capture_default_str();
  sub_gen->add_option("--fps", gen.fps, "Frames per second")->capture_default_str();
  sub_gen->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  sub_gen->add_option("--sigma", gen.sigmas, "Noise level(s); each adds a noisy twin corpus");
  sub_gen->add_flag("--corrupt-root,!--no-corrupt-root", gen.corrupt_root,
                    "Also corrupt the root orientation in noisy twins");
  sub_gen->add_option("--kinds", gen.kinds, "Motion kinds to cycle through")
      ->check(CLI::IsMember({"walk", "wave", "squat", "smooth_random"}));
  sub_gen->callback([&] { run_gen_corpus(*sub_gen, gen); });

  TrainPriorArgs tp;
  CLI::App* sub_tp = app.add_subcommand("train-prior", "Train the motion prior on a clean corpus");
  sub_tp->fallthrough();
  sub_tp->add_option("--corpus", tp.corpus, "Clean corpus manifest.json")->required();
  sub_tp->add_option("--out", tp.out, "Output directory")->required();
  sub_tp->add_option("--init", tp.init, "Checkpoint to resume from");
  sub_tp->add_option("--epochs", tp.train.epochs, "Training epochs")->capture_default_str();
  sub_tp->add_option("--batch", tp.train.batch, "Windows per step")->capture_default_str();
  sub_tp->add_option("--lr", tp.train.lr, "Adam learning rate")->capture_default_str();
  sub_tp->add_option("--seq-len", tp.train.seq_len, "Window length in frames")->capture_default_str();
  sub_tp->add_option("--w-rec-mesh", tp.train.w_rec_mesh, "3D point reconstruction weight")->capture_default_str();
  sub_tp->add_option("--kl-warmup", tp.train.kl_warmup, "Fraction of steps for the KL ramp")->capture_default_str();
  sub_tp->add_option("--seed", tp.train.seed, "Random seed")->capture_default_str();
  sub_tp->add_option("--z-dim", tp.arch.z_dim, "Latent dimension")->capture_default_str();
  sub_tp->add_option("--hidden", tp.arch.hidden, "Latent recurrence width")->capture_default_str();
  sub_tp->add_option("--g-hidden", tp.arch.g_hidden, "Backward recurrence width")->capture_default_str();
  sub_tp->add_option("--x0-embed", tp.arch.x0_embed, "Initial-state embedding width")->capture_default_str();
  sub_tp->add_option("--head-hidden", tp.arch.head_hidden, "Head hidden width")->capture_default_str();
  sub_tp->add_option("--var-floor", tp.arch.var_floor, "Variance floor")->capture_default_str();
  sub_tp->callback([&] { run_train_prior(*sub_tp, tp); });

  TrainDenoiserArgs td;
  CLI::App* sub_td = app.add_subcommand("train-denoiser", "Train the denoiser on a noisy corpus");
  sub_td->fallthrough();
  sub_td->add_option("--prior", td.prior, "Trained prior checkpoint")->required();
  sub_td->add_option("--corpus", td.corpus, "Noisy corpus manifest.json")->required();
  sub_td->add_option("--out", td.out, "Output directory")->required();
  sub_td->add_option("--init", td.init, "Denoiser checkpoint to resume from");
  sub_td->add_option("--epochs", td.train.epochs, "Training epochs")->capture_default_str();
  sub_td->add_option("--batch", td.train.batch, "Windows per step")->capture_default_str();
  sub_td->add_option("--lr", td.train.lr, "Adam learning rate")->capture_default_str();
  sub_td->add_option("--seq-len", td.train.seq_len, "Window length in frames")->capture_default_str();
  sub_td->add_option("--seed", td.train.seed, "Random seed")->capture_default_str();
  sub_td->add_option("--lambda", td.noise.lambda, "Noise prior tail weight")->capture_default_str();
  sub_td->add_option("--omega-hidden", td.noise.omega_hidden, "Initial-state net width")->capture_default_str();
  sub_td->add_option("--var-floor", td.noise.var_floor, "Variance floor")->capture_default_str();
  sub_td->add_flag("--tie-noise", td.noise.tie_noise_to_prior,
                   "Pin the noise posterior to its prior (exact Gaussian objective)");
  sub_td->callback([&] { run_train_denoiser(*sub_td, td); });

  DenoiseArgs dn;
  CLI::App* sub_dn = app.add_subcommand("denoise", "Denoise a corpus split with a trained model");
  sub_dn->fallthrough();
  sub_dn->add_option("--model", dn.model, "Trained denoiser checkpoint")->required();
  sub_dn->add_option("--corpus", dn.corpus, "Noisy corpus manifest.json")->required();
  sub_dn->add_option("--out", dn.out, "Output directory")->required();
  sub_dn->add_option("--split", dn.split, "Corpus split to denoise")->capture_default_str();
  sub_dn->add_option("--mode", dn.mode, "regression: one pass; optimization: adapt first")->capture_default_str()
      ->check(CLI::IsMember({"regression", "optimization"}));
  sub_dn->add_option("--iters", dn.iters, "Adaptation steps for optimization mode")->capture_default_str();
  sub_dn->add_option("--n-samples", dn.n_samples, "Posterior draws per frame")->capture_default_str();
  sub_dn->add_option("--output", dn.output, "blend: mix with observations; prior: model mean")->capture_default_str()
      ->check(CLI::IsMember({"blend", "prior"}));
  sub_dn->add_option("--opt-lr", dn.opt_lr, "Adam learning rate for adaptation")->capture_default_str();
  sub_dn->add_option("--seed", dn.seed, "Random seed")->capture_default_str();
  sub_dn->callback([&] { run_denoise(*sub_dn, dn); });

  FitTrajectoryArgs ft;
  CLI::App* sub_ft = app.add_subcommand(
      "fit-trajectory", "Recover global translation and orientation from 2D detections");
  sub_ft->fallthrough();
  sub_ft->add_option("--detections", ft.detections, "Detections JSONL")->required();
  sub_ft->add_option("--camera", ft.camera, "Camera JSON")->required();
  sub_ft->add_option("--motion", ft.motion, "Motion file providing local poses and shape")
      ->required();
  sub_ft->add_option("--out", ft.out, "Output directory")->required();
  sub_ft->add_option("--truth", ft.truth, "Reference motion for recovery error reporting");
  sub_ft->add_option("--lambda-data", ft.fit.lambda_data, "Reprojection weight")->capture_default_str();
  sub_ft->add_option("--lambda-smooth", ft.fit.lambda_smooth, "Smoothness weight")->capture_default_str();
  sub_ft->add_option("--gm-scale", ft.fit.gm_scale_px, "Robust kernel scale in pixels")->capture_default_str();
  sub_ft->add_option("--max-iters", ft.fit.max_iters, "L-BFGS iteration cap")->capture_default_str();
  sub_ft->add_option("--tolerance", ft.fit.tolerance, "L-BFGS gradient tolerance")->capture_default_str();
  sub_ft->add_flag("--init-from-motion", ft.init_from_motion,
                   "Warm-start translation from the motion file instead of the depth heuristic");
  CLI::Option* opt_chain = sub_ft->add_flag("--chain-denoise", ft.chain_denoise,
                                            "Denoise the fitted motion afterwards");
  CLI::Option* opt_model =
      sub_ft->add_option("--model", ft.model, "Denoiser checkpoint for --chain-denoise");
  opt_chain->needs(opt_model);
  sub_ft->add_option("--n-samples", ft.n_samples, "Posterior draws for --chain-denoise")->capture_default_str();
  sub_ft->add_option("--output", ft.output, "Denoise output kind for --chain-denoise")->capture_default_str()
      ->check(CLI::IsMember({"blend", "prior"}));
  sub_ft->add_option("--seed", ft.seed, "Random seed")->capture_default_str();
  sub_ft->callback([&] { run_fit_trajectory(*sub_ft, ft); });

  EvalArgs ev;
  CLI::App* sub_ev = app.add_subcommand("eval", "Evaluate predicted motions against clean references");
  sub_ev->fallthrough();
  sub_ev->add_option("--corpus", ev.corpus, "Noisy corpus manifest.json")->required();
  sub_ev->add_option("--pred", ev.pred, "Directory of predicted motion files")->required();
  sub_ev->add_option("--out", ev.out, "Output directory")->required();
  sub_ev->add_option("--split", ev.split, "Corpus split to evaluate")->capture_default_str();
  sub_ev->add_option("--sec-per-frame", ev.sec_per_frame,
                     "Stamp a measured speed into the report (eval itself does not time)")->capture_default_str();
  sub_ev->callback([&] { run_eval(*sub_ev, ev); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 3;
  }
  return 0;
}
