#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdn/corpus.hpp"
#include "mdn/kinematics.hpp"
#include "mdn/motion_vae.hpp"
#include "mdn/noise_model.hpp"
#include "mdn/param_set.hpp"

namespace mdn {

// What denoising returns per coordinate: the model's decoded mean, or the
// noise-posterior blend of that mean with the raw observation.
enum class DenoiseOutput { PurePrior, Blend };

struct DenoiserConfig {
  double lambda = 1e6;    // noise prior IG(lambda/2, lambda/2)
  int omega_hidden = 256; // backward recurrence of the initial-state net
  double var_floor = 1e-8;
  // Replaces the learned noise posterior with the prior itself: E[1/v] = 1
  // and zero noise KL, i.e. an exact Gaussian-noise objective.
  bool tie_noise_to_prior = false;
};

// Denoising model wrapping a trained motion prior. One parameter set holds
// the frozen generative groups, the finetuned encoder groups, the
// initial-state net ("omega") and the noise net ("gamma").
struct DenoiserModel {
  DvaeConfig dvae_cfg;
  DenoiserConfig cfg;
  ParamSet params;
  bool trained = false;

  static DenoiserModel from_prior(const DvaeModel& prior, const DenoiserConfig& cfg,
                                  std::uint64_t seed);
  void save(const std::string& path) const;
  static DenoiserModel load(const std::string& path);
};

const std::set<std::string>& denoiser_trainable_groups();  // encoder + omega + gamma

// A noisy sequence prepared for the model: velocity-augmented states and
// observed 3D points, both with the frame-0 translation removed. The shape
// estimate is the mean of the per-frame inputs (one per sequence here).
struct NoisyObservationSeq {
  std::vector<Tensor> y_states;  // frames 0..T, each {138}
  std::vector<Tensor> y3d;       // frames 0..T, each {195}
  BodyShape shape;
  Vec3 canon_offset;             // world translation to add back to outputs

  static NoisyObservationSeq from_motion(const MotionSequence& seq);
};

// Non-overlapping win_len-frame windows, each canonicalized independently.
std::vector<NoisyObservationSeq> cut_noisy_windows(const MotionSequence& seq, int win_len);

namespace dnz {

// Tape-side pieces, sharing dvae:: blocks through the merged parameter set.
GaussianHead initial_state_head(ParamBinder& b, const DenoiserModel& m,
                                const std::vector<Var>& y_states);

struct IgHead {
  Var alpha;  // {195}
  Var beta;   // {195}
};

// Per-coordinate noise posterior from (z-summary state, observation, x0
// embedding). Parameterized as lambda/2 + softplus(raw + c0) with c0 chosen
// so zero raw output gives the one-observation conjugate update
// IG(lambda/2 + 1, lambda/2 + 1); the posterior can approach but never cross
// the prior's tail weight. tie_noise_to_prior returns the prior itself.
IgHead noise_head(ParamBinder& b, const DenoiserModel& m, Var h, Var y3d_t, Var x0e);

}  // namespace dnz

// Gaussian over the initial 138-dim state from all observed frames.
std::pair<Tensor, Tensor> predict_initial_state(const DenoiserModel& m,
                                                const NoisyObservationSeq& y);

// Noise posterior per observed coordinate at one step.
std::vector<IgParams> predict_noise(const DenoiserModel& m, const Tensor& h,
                                    const Tensor& y3d_t, const Tensor& x0_embed);

struct DenoiseLossWeights {
  double kl_dvae = 1.0;
  double kl_noise = 1.0;
};

// Negative ELBO of the noise-aware model, mean over frames: inverse-variance
// weighted squared 3D residuals (E[1/v] = alpha/beta in closed form, frame 0
// reconstructed from a sampled initial state), Gaussian KL of the latent
// posterior against the frozen prior, and the noise posterior's KL against
// IG(lambda/2, lambda/2). Gradients reach only encoder, omega and gamma
// parameters. Throws NumericError with a term breakdown on non-finite loss.
double unsupervised_loss(DenoiserModel& model, const NoisyObservationSeq& y,
                         std::uint64_t seed, const DenoiseLossWeights& weights = {},
                         bool with_grad = false);

struct DenoiserTrainConfig {
  int epochs = 10;
  int batch = 8;
  double lr = 1e-4;
  int seq_len = 60;
  std::uint64_t seed = 0;
};

struct DenoiserTrainLog {
  std::vector<double> train_loss;
  std::vector<std::pair<int, double>> val_loss;  // (step, loss) per epoch
};

// Finetunes encoder + omega + gamma on noisy sequences; the generative groups
// are verified bitwise unchanged afterwards (hard failure on drift).
DenoiserTrainLog train_denoiser(DenoiserModel& model,
                                const std::vector<MotionSequence>& train,
                                const std::vector<MotionSequence>& val,
                                const DenoiserTrainConfig& config);

struct DenoiseResult {
  std::vector<Observation3D> points;  // frames 0..T in the input world frame
  std::vector<Tensor> states;         // frame 0: initial-state mean; then decoded means
};

// Monte-Carlo posterior-mean denoising: frame 0 is the kinematic output of
// the initial-state mean; later frames average decoded rollouts over
// n_samples latent draws, blended per coordinate with the observation when
// output = Blend. No optimization happens here.
DenoiseResult denoise_regression(const DenoiserModel& model, const NoisyObservationSeq& y,
                                 int n_samples, std::uint64_t seed,
                                 DenoiseOutput output = DenoiseOutput::PurePrior);

struct DenoiseOptConfig {
  double lr = 1e-4;
  int n_samples = 10;
  std::uint64_t seed = 0;
  DenoiseOutput output = DenoiseOutput::PurePrior;
};

struct DenoiseOptResult {
  std::vector<DenoiseResult> results;
  DenoiserModel adapted;
  std::vector<double> loss_trace;
  bool stopped_early = false;
};

// Adapts a private copy of the model to the given set with iters steps of
// Adam on the joint unsupervised loss, then runs regression with the adapted
// weights. Per-sequence draw seeds are splitmix64(seed ^ splitmix64(1000+i)).
// Divergence (loss above 10x the first step, or non-finite) stops early and
// keeps the best iterate.
DenoiseOptResult denoise_optimization(const DenoiserModel& model,
                                      const std::vector<NoisyObservationSeq>& y_set,
                                      int iters, const DenoiseOptConfig& config);

// Convex combination E[v/(v+1)] * m + E[1/(v+1)] * y under the posterior.
double blend_with_noise(double m, double y, const IgParams& v_posterior);

}  // namespace mdn
