#include "mdn/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "mdn/errors.hpp"
#include "mdn/optim.hpp"
#include "mdn/rng.hpp"

namespace mdn {

using nlohmann::json;

const std::set<std::string>& denoiser_trainable_groups() {
  static const std::set<std::string> g = {"xrnn", "enc_head", "omega", "gamma"};
  return g;
}

DenoiserModel DenoiserModel::from_prior(const DvaeModel& prior, const DenoiserConfig& cfg,
                                        std::uint64_t seed) {
  if (cfg.lambda <= 0) throw DataError("DenoiserModel::from_prior: lambda must be positive");
  if (cfg.omega_hidden <= 0 || cfg.var_floor < 0)
    throw DataError("DenoiserModel::from_prior: bad network sizes");
  DenoiserModel m;
  m.dvae_cfg = prior.cfg;
  m.cfg = cfg;
  m.params = prior.params;
  Rng rng(seed);
  add_gru(m.params, "ornn", kStateDim, cfg.omega_hidden, "omega", rng);
  add_mlp2(m.params, "ohead", cfg.omega_hidden, prior.cfg.head_hidden, 2 * kStateDim,
           "omega", rng);
  add_mlp2(m.params, "ghead", prior.cfg.hidden + kObsDim + prior.cfg.x0_embed,
           prior.cfg.head_hidden, 2 * kObsDim, "gamma", rng);
  // keep the initial noise posterior within reach of the conjugate update
  for (double& w : m.params.value("ghead.w2").v) w *= 0.01;
  return m;
}

void DenoiserModel::save(const std::string& path) const {
  json j;
  j["format_version"] = 1;
  j["dvae_config"] = {{"z_dim", dvae_cfg.z_dim},
                      {"hidden", dvae_cfg.hidden},
                      {"g_hidden", dvae_cfg.g_hidden},
                      {"x0_embed", dvae_cfg.x0_embed},
                      {"head_hidden", dvae_cfg.head_hidden},
                      {"var_floor", dvae_cfg.var_floor}};
  j["denoiser_config"] = {{"lambda", cfg.lambda},
                          {"omega_hidden", cfg.omega_hidden},
                          {"var_floor", cfg.var_floor},
                          {"tie_noise_to_prior", cfg.tie_noise_to_prior}};
  j["trained"] = trained;
  j["params"] = params.to_json();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file " + path);
  out << j.dump() << '\n';
  if (!out.good()) throw DataError("failed writing model file " + path);
}

DenoiserModel DenoiserModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError("model file " + path + ": " + e.what());
  }
  const std::string ctx = "model file " + path;
  for (const char* key : {"dvae_config", "denoiser_config", "params", "trained"})
    if (!j.is_object() || !j.contains(key))
      throw DataError(ctx + ": missing field '" + std::string(key) + "'");

  auto num = [&](const json& o, const char* key) {
    if (!o.contains(key) || !o[key].is_number())
      throw DataError(ctx + ": config field '" + std::string(key) +
                      "' missing or not a number");
    return o[key];
  };
  const json& dc = j["dvae_config"];
  DvaeConfig dcfg;
  dcfg.z_dim = num(dc, "z_dim").get<int>();
  dcfg.hidden = num(dc, "hidden").get<int>();
  dcfg.g_hidden = num(dc, "g_hidden").get<int>();
  dcfg.x0_embed = num(dc, "x0_embed").get<int>();
  dcfg.head_hidden = num(dc, "head_hidden").get<int>();
  dcfg.var_floor = num(dc, "var_floor").get<double>();

  const json& nc = j["denoiser_config"];
  DenoiserConfig ncfg;
  ncfg.lambda = num(nc, "lambda").get<double>();
  ncfg.omega_hidden = num(nc, "omega_hidden").get<int>();
  ncfg.var_floor = num(nc, "var_floor").get<double>();
  if (!nc.contains("tie_noise_to_prior") || !nc["tie_noise_to_prior"].is_boolean())
    throw DataError(ctx + ": config field 'tie_noise_to_prior' missing or not a boolean");
  ncfg.tie_noise_to_prior = nc["tie_noise_to_prior"].get<bool>();
  if (!j["trained"].is_boolean())
    throw DataError(ctx + ": field 'trained' must be a boolean");

  DenoiserModel m;
  m.dvae_cfg = dcfg;
  m.cfg = ncfg;
  m.trained = j["trained"].get<bool>();
  m.params = ParamSet::from_json(j["params"], ctx);

  DenoiserModel fresh = from_prior(DvaeModel::init(dcfg, 0), ncfg, 0);
  for (const auto& name : fresh.params.names()) {
    if (!m.params.has(name)) throw DataError(ctx + ": missing parameter " + name);
    if (m.params.value(name).shape != fresh.params.value(name).shape)
      throw DataError(ctx + ": parameter " + name + " has shape " +
                      m.params.value(name).shape_str() + ", expected " +
                      fresh.params.value(name).shape_str());
  }
  if (m.params.names().size() != fresh.params.names().size())
    throw DataError(ctx + ": unexpected extra parameters");
  return m;
}

NoisyObservationSeq NoisyObservationSeq::from_motion(const MotionSequence& seq) {
  if (seq.frames.size() < 2)
    throw DataError("NoisyObservationSeq: need at least two frames");
  NoisyObservationSeq y;
  std::copy(seq.betas.begin(), seq.betas.end(), y.shape.beta.begin());
  std::vector<PoseState> states = motion_states(seq);
  y.canon_offset = states[0].r;
  y.y_states.reserve(states.size());
  y.y3d.reserve(states.size());
  for (PoseState st : states) {
    st.r = st.r - y.canon_offset;
    y.y_states.push_back(st.to_vec());
    y.y3d.push_back(forward_kinematics(st, y.shape).to_vec());
  }
  return y;
}

std::vector<NoisyObservationSeq> cut_noisy_windows(const MotionSequence& seq, int win_len) {
  if (win_len < 2) throw DataError("cut_noisy_windows: win_len must be at least 2");
  std::vector<NoisyObservationSeq> out;
  const int n = static_cast<int>(seq.frames.size());
  for (int s = 0; s + win_len <= n; s += win_len) {
    MotionSequence w;
    w.fps = seq.fps;
    w.betas = seq.betas;
    w.frames.assign(seq.frames.begin() + s, seq.frames.begin() + s + win_len);
    out.push_back(NoisyObservationSeq::from_motion(w));
  }
  return out;
}

namespace dnz {

GaussianHead initial_state_head(ParamBinder& b, const DenoiserModel& m,
                                const std::vector<Var>& y_states) {
  Tape& tape = *y_states.front().tape;
  Var state = tape.constant(Tensor::zeros({m.cfg.omega_hidden}));
  for (int t = static_cast<int>(y_states.size()) - 1; t >= 0; --t)
    state = gru_step(b, "ornn", y_states[t], state);
  return gaussian_head(mlp2(b, "ohead", state), kStateDim, m.cfg.var_floor);
}

IgHead noise_head(ParamBinder& b, const DenoiserModel& m, Var h, Var y3d_t, Var x0e) {
  const double half = m.cfg.lambda / 2.0;
  if (m.cfg.tie_noise_to_prior) {
    Tape& tape = *h.tape;
    Var p = tape.constant(Tensor::full({kObsDim}, half));
    return {p, p};
  }
  const double c0 = std::log(std::exp(1.0) - 1.0);  // softplus(c0) = 1
  Var out = mlp2(b, "ghead", concat(concat(h, y3d_t), x0e));
  Var alpha = softplus(slice(out, 0, kObsDim) + c0) + half;
  Var beta = softplus(slice(out, kObsDim, kObsDim) + c0) + half;
  return {alpha, beta};
}

}  // namespace dnz

namespace {

ParamSet& mutable_params(const DenoiserModel& m) {
  return const_cast<ParamSet&>(m.params);
}

struct DivergenceStop {};

}  // namespace

std::pair<Tensor, Tensor> predict_initial_state(const DenoiserModel& m,
                                                const NoisyObservationSeq& y) {
  if (y.y_states.empty()) throw DataError("predict_initial_state: empty sequence");
  Tape tape;
  ParamBinder bind(tape, mutable_params(m));
  std::vector<Var> y_in(y.y_states.size());
  for (std::size_t t = 0; t < y.y_states.size(); ++t) y_in[t] = tape.constant(y.y_states[t]);
  GaussianHead q0 = dnz::initial_state_head(bind, m, y_in);
  return {tape.val(q0.mu), tape.val(q0.var)};
}

std::vector<IgParams> predict_noise(const DenoiserModel& m, const Tensor& h,
                                    const Tensor& y3d_t, const Tensor& x0_embed) {
  Tape tape;
  ParamBinder bind(tape, mutable_params(m));
  dnz::IgHead head = dnz::noise_head(bind, m, tape.constant(h), tape.constant(y3d_t),
                                     tape.constant(x0_embed));
  const Tensor& a = tape.val(head.alpha);
  const Tensor& b = tape.val(head.beta);
  std::vector<IgParams> out(a.v.size());
  for (std::size_t i = 0; i < a.v.size(); ++i) out[i] = {a.v[i], b.v[i]};
  return out;
}

double unsupervised_loss(DenoiserModel& model, const NoisyObservationSeq& y,
                         std::uint64_t seed, const DenoiseLossWeights& weights,
                         bool with_grad) {
  const int n_frames = static_cast<int>(y.y_states.size());
  if (n_frames < 2) throw DataError("unsupervised_loss: need at least two frames");
  if (y.y3d.size() != y.y_states.size())
    throw DataError("unsupervised_loss: frame count mismatch between states and points");

  Tape tape;
  tape.reserve(static_cast<std::size_t>(n_frames) * 1500 + 64);
  ParamBinder bind(tape, model.params, generative_groups());
  Rng rng(seed);
  const DvaeConfig& dc = model.dvae_cfg;

  std::vector<Var> y_in(y.y_states.size());
  for (int t = 0; t < n_frames; ++t) y_in[t] = tape.constant(y.y_states[t]);
  GaussianHead q0 = dnz::initial_state_head(bind, model, y_in);
  Var x0s = reparam(q0.mu, q0.var, rng.normal_vec(kStateDim));
  Var x0e = dvae::embed_x0(bind, x0s);

  std::vector<Var> future(y_in.begin() + 1, y_in.end());
  std::vector<Var> g = dvae::backward_g(bind, dc, future);

  double rec_acc = 0, kl_dvae_acc = 0, kl_noise_acc = 0;
  Var loss = tape.constant(0.0);

  auto observation_terms = [&](Var h_t, Var model_3d, int t) {
    Var y_obs = tape.constant(y.y3d[t]);
    Var resid = model_3d - y_obs;
    dnz::IgHead ig = dnz::noise_head(bind, model, h_t, y_obs, x0e);
    Var rec = 0.5 * dot(ig.alpha / ig.beta, resid * resid);
    rec_acc += tape.val(rec).v[0];
    loss = loss + rec;
    if (!model.cfg.tie_noise_to_prior) {
      Var kln = ig_kl_to_prior(ig.alpha, ig.beta, model.cfg.lambda);
      kl_noise_acc += tape.val(kln).v[0];
      loss = loss + weights.kl_noise * kln;
    }
  };

  Var h = tape.constant(Tensor::zeros({dc.hidden}));
  observation_terms(h, fk_obs_var(x0s, y.shape), 0);

  for (int t = 1; t < n_frames; ++t) {
    GaussianHead prior = dvae::prior_step(bind, dc, h, x0e);
    GaussianHead post = dvae::encode_step(bind, dc, g[t - 1], h, x0e);
    Var kl = kl_diag_gaussian(post.mu, post.var, prior.mu, prior.var);
    kl_dvae_acc += tape.val(kl).v[0];
    loss = loss + weights.kl_dvae * kl;
    Var z = reparam(post.mu, post.var, rng.normal_vec(dc.z_dim));
    h = dvae::advance_z(bind, z, h);
    Var mu_x = dvae::decode_step(bind, h, x0e);
    observation_terms(h, fk_obs_var(mu_x, y.shape), t);
  }
  loss = loss * (1.0 / n_frames);

  double value = tape.val(loss).v[0];
  if (!std::isfinite(value))
    throw NumericError("unsupervised_loss: non-finite loss (rec=" + std::to_string(rec_acc) +
                       ", kl_dvae=" + std::to_string(kl_dvae_acc) +
                       ", kl_noise=" + std::to_string(kl_noise_acc) + ")");
  if (with_grad) {
    tape.backward(loss);
    bind.write_grads();
  }
  return value;
}

DenoiserTrainLog train_denoiser(DenoiserModel& model,
                                const std::vector<MotionSequence>& train,
                                const std::vector<MotionSequence>& val,
                                const DenoiserTrainConfig& config) {
  std::vector<NoisyObservationSeq> train_w, val_w;
  for (const auto& s : train)
    for (auto& w : cut_noisy_windows(s, config.seq_len)) train_w.push_back(std::move(w));
  for (const auto& s : val)
    for (auto& w : cut_noisy_windows(s, config.seq_len)) val_w.push_back(std::move(w));
  if (train_w.empty())
    throw DataError("train_denoiser: no training windows of length " +
                    std::to_string(config.seq_len));

  const ParamSet before = model.params;
  const int steps_per_epoch =
      (static_cast<int>(train_w.size()) + config.batch - 1) / config.batch;
  const int total_steps = config.epochs * steps_per_epoch;

  DenoiserTrainLog log;
  int step = 0;
  const std::uint64_t val_seed = splitmix64(config.seed ^ 0xDE901);

  auto objective = [&](ParamSet&, Rng& rng) {
    double total = 0;
    for (int i = 0; i < config.batch; ++i) {
      const auto& w = train_w[rng.next_u64() % train_w.size()];
      total += unsupervised_loss(model, w, rng.next_u64(), {}, true);
    }
    ++step;
    if (step % steps_per_epoch == 0 && !val_w.empty()) {
      double v = 0;
      for (const auto& w : val_w) v += unsupervised_loss(model, w, val_seed, {}, false);
      log.val_loss.emplace_back(step, v / static_cast<double>(val_w.size()));
    }
    return total / config.batch;
  };

  AdamConfig ac;
  ac.lr = config.lr;
  ac.steps = total_steps;
  ac.seed = config.seed;
  log.train_loss = adam_minimize(objective, model.params, ac, denoiser_trainable_groups());

  if (!model.params.groups_bitwise_equal(before, generative_groups()))
    throw NumericError("train_denoiser: frozen generative weights drifted");
  model.trained = true;
  return log;
}

DenoiseResult denoise_regression(const DenoiserModel& model, const NoisyObservationSeq& y,
                                 int n_samples, std::uint64_t seed, DenoiseOutput output) {
  if (!model.trained) throw DataError("denoise_regression: model has not been trained");
  if (n_samples < 1) throw DataError("denoise_regression: n_samples must be at least 1");
  const int n_frames = static_cast<int>(y.y_states.size());
  if (n_frames < 2 || y.y3d.size() != y.y_states.size())
    throw DataError("denoise_regression: bad sequence");

  Tape tape;
  ParamBinder bind(tape, mutable_params(model));
  Rng rng(seed);
  const DvaeConfig& dc = model.dvae_cfg;

  std::vector<Var> y_in(y.y_states.size());
  std::vector<Var> y3d_in(y.y3d.size());
  for (int t = 0; t < n_frames; ++t) {
    y_in[t] = tape.constant(y.y_states[t]);
    y3d_in[t] = tape.constant(y.y3d[t]);
  }
  GaussianHead q0 = dnz::initial_state_head(bind, model, y_in);
  const Tensor mu0 = tape.val(q0.mu);
  const Tensor var0 = tape.val(q0.var);

  std::vector<Var> future(y_in.begin() + 1, y_in.end());
  std::vector<Var> g = dvae::backward_g(bind, dc, future);

  std::vector<Tensor> acc3d(n_frames, Tensor::zeros({kObsDim}));
  std::vector<Tensor> acc_state(n_frames, Tensor::zeros({kStateDim}));

  for (int s = 0; s < n_samples; ++s) {
    Tensor x0 = mu0;
    Tensor eps0 = rng.normal_vec(kStateDim);
    for (int i = 0; i < kStateDim; ++i) x0.v[i] += std::sqrt(var0.v[i]) * eps0.v[i];
    Var x0e = dvae::embed_x0(bind, tape.constant(x0));
    Var h = tape.constant(Tensor::zeros({dc.hidden}));
    for (int t = 1; t < n_frames; ++t) {
      GaussianHead post = dvae::encode_step(bind, dc, g[t - 1], h, x0e);
      Tensor z = tape.val(post.mu);
      Tensor eps = rng.normal_vec(dc.z_dim);
      for (int k = 0; k < dc.z_dim; ++k)
        z.v[k] += std::sqrt(tape.val(post.var).v[k]) * eps.v[k];
      h = dvae::advance_z(bind, tape.constant(z), h);
      Tensor m_state = tape.val(dvae::decode_step(bind, h, x0e));
      Tensor m3d = forward_kinematics(PoseState::from_vec(m_state), y.shape).to_vec();
      if (output == DenoiseOutput::Blend) {
        dnz::IgHead igh = dnz::noise_head(bind, model, h, y3d_in[t], x0e);
        const Tensor& av = tape.val(igh.alpha);
        const Tensor& bv = tape.val(igh.beta);
        for (int c = 0; c < kObsDim; ++c) {
          double shrink = ig_mean_shrink({av.v[c], bv.v[c]});
          acc3d[t].v[c] += shrink * m3d.v[c] + (1.0 - shrink) * y.y3d[t].v[c];
        }
      } else {
        for (int c = 0; c < kObsDim; ++c) acc3d[t].v[c] += m3d.v[c];
      }
      for (int i = 0; i < kStateDim; ++i) acc_state[t].v[i] += m_state.v[i];
    }
  }

  DenoiseResult result;
  result.points.reserve(y.y_states.size());
  result.states.reserve(y.y_states.size());

  acc3d[0] = forward_kinematics(PoseState::from_vec(mu0), y.shape).to_vec();
  acc_state[0] = mu0;
  const double inv = 1.0 / n_samples;
  for (int t = 0; t < n_frames; ++t) {
    if (t > 0) {
      for (double& v : acc3d[t].v) v *= inv;
      for (double& v : acc_state[t].v) v *= inv;
    }
    for (int p = 0; p < kPointCount; ++p) {
      acc3d[t].v[3 * p + 0] += y.canon_offset.x;
      acc3d[t].v[3 * p + 1] += y.canon_offset.y;
      acc3d[t].v[3 * p + 2] += y.canon_offset.z;
    }
    acc_state[t].v[0] += y.canon_offset.x;
    acc_state[t].v[1] += y.canon_offset.y;
    acc_state[t].v[2] += y.canon_offset.z;
    result.points.push_back(Observation3D::from_vec(acc3d[t]));
    result.states.push_back(std::move(acc_state[t]));
  }
  return result;
}

DenoiseOptResult denoise_optimization(const DenoiserModel& model,
                                      const std::vector<NoisyObservationSeq>& y_set,
                                      int iters, const DenoiseOptConfig& config) {
  if (!model.trained) throw DataError("denoise_optimization: model has not been trained");
  if (y_set.empty()) throw DataError("denoise_optimization: empty sequence set");
  if (iters < 0) throw DataError("denoise_optimization: negative iteration count");

  DenoiseOptResult out;
  out.adapted = model;

  if (iters > 0) {
    double initial = -1;
    double best = std::numeric_limits<double>::infinity();
    ParamSet best_params = out.adapted.params;
    std::vector<double> trace;

    auto objective = [&](ParamSet& p, Rng& rng) {
      double total = 0;
      for (const auto& seq : y_set)
        total += unsupervised_loss(out.adapted, seq, rng.next_u64(), {}, true);
      total /= static_cast<double>(y_set.size());
      if (initial < 0) initial = total;
      if (total < best) {
        best = total;
        best_params = p;
      }
      trace.push_back(total);
      if (total > 10.0 * initial) throw DivergenceStop{};
      return total;
    };

    AdamConfig ac;
    ac.lr = config.lr;
    ac.steps = iters;
    ac.seed = config.seed;
    try {
      adam_minimize(objective, out.adapted.params, ac, denoiser_trainable_groups());
    } catch (const DivergenceStop&) {
      out.stopped_early = true;
      out.adapted.params = best_params;
    } catch (const NumericError&) {
      out.stopped_early = true;
      out.adapted.params = best_params;
    }
    out.loss_trace = std::move(trace);
  }

  out.results.reserve(y_set.size());
  for (std::size_t i = 0; i < y_set.size(); ++i) {
    std::uint64_t s = splitmix64(config.seed ^ splitmix64(1000 + i));
    out.results.push_back(
        denoise_regression(out.adapted, y_set[i], config.n_samples, s, config.output));
  }
  return out;
}

double blend_with_noise(double m, double y, const IgParams& v_posterior) {
  double shrink = ig_mean_shrink(v_posterior);
  return shrink * m + (1.0 - shrink) * y;
}

}  // namespace mdn
