#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mdn/corpus.hpp"
#include "mdn/kinematics.hpp"
#include "mdn/nets.hpp"
#include "mdn/param_set.hpp"
#include "mdn/tensor.hpp"

namespace mdn {

struct DvaeConfig {
  int z_dim = 48;
  int hidden = 256;    // forward recurrence over the latent sequence
  int g_hidden = 256;  // backward recurrence over observed states
  int x0_embed = 128;
  int head_hidden = 256;
  double var_floor = 1e-8;
};

// Dynamical VAE over 138-dim pose states. One forward GRU summarizes the
// latent history z_1:t; the prior head, decoder head, and encoder head all
// read that same summary, so the three distributions condition on a single
// consistent representation. The encoder additionally sees a backward GRU
// over future states, making it causal in z and anticausal in x.
struct DvaeModel {
  DvaeConfig cfg;
  ParamSet params;

  static DvaeModel init(const DvaeConfig& cfg, std::uint64_t seed);
  void save(const std::string& path) const;
  static DvaeModel load(const std::string& path);
};

// Parameter groups of the generative half (prior, decoder, shared forward
// recurrence, x0 embedding). These stay frozen while the denoiser finetunes
// the encoder half ("xrnn", "enc_head").
const std::set<std::string>& generative_groups();
const std::set<std::string>& encoder_groups();

namespace dvae {

// Tape-side building blocks. All bind parameters through the model's names;
// pass a binder over model.params.
Var embed_x0(ParamBinder& b, Var x0);                              // {138} -> {E}
Var advance_z(ParamBinder& b, Var z, Var h_prev);                  // -> {H}
GaussianHead prior_step(ParamBinder& b, const DvaeConfig& cfg, Var h_prev, Var x0e);
Var decode_step(ParamBinder& b, Var h, Var x0e);                   // -> {138}
// g_t for t = 1..T from a backward recurrence over x_t..x_T; index 0 <-> t=1.
std::vector<Var> backward_g(ParamBinder& b, const DvaeConfig& cfg,
                            const std::vector<Var>& x_seq);
GaussianHead encode_step(ParamBinder& b, const DvaeConfig& cfg, Var g_t, Var h_prev,
                         Var x0e);

}  // namespace dvae

struct LatentSeq {
  Tensor z;                    // {T, z_dim}
  Tensor post_mu, post_var;    // {T, z_dim}
  Tensor prior_mu, prior_var;  // {T, z_dim}
};

// Training window: x0 is the conditioning frame, targets are the frames to
// reconstruct (window frames 1..T). Translation is canonicalized so the
// window starts at r = 0; velocities carry over unchanged.
struct StateWindow {
  Tensor x0;
  std::vector<Tensor> targets;
  BodyShape shape;
};

// Non-overlapping windows of win_len frames; a trailing partial window is
// dropped. Empty result when the sequence is shorter than win_len.
std::vector<StateWindow> cut_windows(const MotionSequence& seq, int win_len);

struct ElboWeights {
  double w_rec_mesh = 1.0;
  double kl_scale = 1.0;
};

// Per-step mean of: 0.5 |x_t - mu_dec|^2 + kl_scale * KL(q || prior)
// + w_rec_mesh * |points(x_t) - points(mu_dec)|^2 over joints and markers.
// Latents are sampled by reparameterization from the seed, so the value is
// deterministic given (params, inputs, seed). with_grad accumulates into
// model.params grads; caller zeroes them.
double elbo_loss(DvaeModel& model, const Tensor& x0, const std::vector<Tensor>& targets,
                 const BodyShape& shape, const ElboWeights& weights, std::uint64_t seed,
                 bool with_grad = false);

struct PriorTrainConfig {
  int epochs = 20;
  int batch = 8;
  double lr = 1e-3;
  int seq_len = 60;
  double w_rec_mesh = 1.0;
  double kl_warmup = 0.2;  // fraction of total steps for the linear KL ramp
  std::uint64_t seed = 0;
};

struct PriorTrainLog {
  std::vector<double> train_loss;                  // one entry per step
  std::vector<std::pair<int, double>> val_loss;    // (step, loss) per epoch
};

// Adam over all parameter groups; windows sampled uniformly per step.
// Validation loss (full KL, fixed draw) is computed at every epoch boundary.
PriorTrainLog train_prior(DvaeModel& model, const std::vector<MotionSequence>& train,
                          const std::vector<MotionSequence>& val,
                          const PriorTrainConfig& config);

// Samples T states from the prior rollout. zero_variance forces z_t to the
// prior mean, making the rollout deterministic.
std::vector<Tensor> generate(const DvaeModel& model, const Tensor& x0, int T,
                             std::uint64_t seed, bool zero_variance = false);

// Posterior over z_1:T with reparameterized samples; prior params evaluated
// along the same sampled path.
LatentSeq encode_sequence(const DvaeModel& model, const std::vector<Tensor>& x_seq,
                          const Tensor& x0, std::uint64_t seed);

// Decodes states from a given latent path (row t-1 of z drives step t).
std::vector<Tensor> decode_given_z(const DvaeModel& model, const Tensor& x0,
                                   const Tensor& z);

// Posterior-mean reconstruction: encode with z_t = posterior mean, decode.
std::vector<Tensor> encode_decode(const DvaeModel& model, const Tensor& x0,
                                  const std::vector<Tensor>& x_seq);

}  // namespace mdn
