#include "mdn/motion_vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mdn/errors.hpp"
#include "mdn/optim.hpp"
#include "mdn/rng.hpp"

namespace mdn {

using nlohmann::json;

const std::set<std::string>& generative_groups() {
  static const std::set<std::string> g = {"zrnn", "prior_head", "dec_head", "x0emb"};
  return g;
}

const std::set<std::string>& encoder_groups() {
  static const std::set<std::string> g = {"xrnn", "enc_head"};
  return g;
}

DvaeModel DvaeModel::init(const DvaeConfig& cfg, std::uint64_t seed) {
  if (cfg.z_dim <= 0 || cfg.hidden <= 0 || cfg.g_hidden <= 0 || cfg.x0_embed <= 0 ||
      cfg.head_hidden <= 0 || cfg.var_floor < 0)
    throw DataError("DvaeModel::init: sizes must be positive");
  DvaeModel m;
  m.cfg = cfg;
  Rng rng(seed);
  add_mlp2(m.params, "x0emb", kStateDim, cfg.x0_embed, cfg.x0_embed, "x0emb", rng);
  add_gru(m.params, "zrnn", cfg.z_dim, cfg.hidden, "zrnn", rng);
  add_mlp2(m.params, "prior", cfg.hidden + cfg.x0_embed, cfg.head_hidden, 2 * cfg.z_dim,
           "prior_head", rng);
  add_mlp2(m.params, "dec", cfg.hidden + cfg.x0_embed, cfg.head_hidden, kStateDim,
           "dec_head", rng);
  add_gru(m.params, "xrnn", kStateDim, cfg.g_hidden, "xrnn", rng);
  add_mlp2(m.params, "enc", cfg.g_hidden + cfg.hidden + cfg.x0_embed, cfg.head_hidden,
           2 * cfg.z_dim, "enc_head", rng);
  return m;
}

void DvaeModel::save(const std::string& path) const {
  json j;
  j["format_version"] = 1;
  j["config"] = {{"z_dim", cfg.z_dim},         {"hidden", cfg.hidden},
                 {"g_hidden", cfg.g_hidden},   {"x0_embed", cfg.x0_embed},
                 {"head_hidden", cfg.head_hidden}, {"var_floor", cfg.var_floor}};
  j["params"] = params.to_json();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file " + path);
  out << j.dump();
  out << '\n';
  if (!out.good()) throw DataError("failed writing model file " + path);
}

DvaeModel DvaeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError("model file " + path + ": " + e.what());
  }
  const std::string ctx = "model file " + path;
  if (!j.is_object() || !j.contains("config") || !j.contains("params"))
    throw DataError(ctx + ": expected object with 'config' and 'params'");
  const json& c = j["config"];
  auto geti = [&](const char* key) {
    if (!c.contains(key) || !c[key].is_number())
      throw DataError(ctx + ": config field '" + key + "' missing or not a number");
    return c[key];
  };
  DvaeConfig cfg;
  cfg.z_dim = geti("z_dim").get<int>();
  cfg.hidden = geti("hidden").get<int>();
  cfg.g_hidden = geti("g_hidden").get<int>();
  cfg.x0_embed = geti("x0_embed").get<int>();
  cfg.head_hidden = geti("head_hidden").get<int>();
  cfg.var_floor = geti("var_floor").get<double>();

  DvaeModel m;
  m.cfg = cfg;
  m.params = ParamSet::from_json(j["params"], ctx);
  DvaeModel fresh = DvaeModel::init(cfg, 0);
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

namespace dvae {

Var embed_x0(ParamBinder& b, Var x0) { return mlp2(b, "x0emb", x0); }

Var advance_z(ParamBinder& b, Var z, Var h_prev) { return gru_step(b, "zrnn", z, h_prev); }

GaussianHead prior_step(ParamBinder& b, const DvaeConfig& cfg, Var h_prev, Var x0e) {
  Var out = mlp2(b, "prior", concat(h_prev, x0e));
  return gaussian_head(out, cfg.z_dim, cfg.var_floor);
}

Var decode_step(ParamBinder& b, Var h, Var x0e) {
  return mlp2(b, "dec", concat(h, x0e));
}

std::vector<Var> backward_g(ParamBinder& b, const DvaeConfig& cfg,
                            const std::vector<Var>& x_seq) {
  const int T = static_cast<int>(x_seq.size());
  std::vector<Var> g(x_seq.size());
  Var state = x_seq.empty() ? Var{} : x_seq[0].tape->constant(Tensor::zeros({cfg.g_hidden}));
  for (int t = T - 1; t >= 0; --t) {
    state = gru_step(b, "xrnn", x_seq[t], state);
    g[t] = state;
  }
  return g;
}

GaussianHead encode_step(ParamBinder& b, const DvaeConfig& cfg, Var g_t, Var h_prev,
                         Var x0e) {
  Var out = mlp2(b, "enc", concat(concat(g_t, h_prev), x0e));
  return gaussian_head(out, cfg.z_dim, cfg.var_floor);
}

}  // namespace dvae

std::vector<StateWindow> cut_windows(const MotionSequence& seq, int win_len) {
  if (win_len < 2) throw DataError("cut_windows: win_len must be at least 2");
  std::vector<PoseState> states = motion_states(seq);
  std::vector<StateWindow> windows;
  const int n = static_cast<int>(states.size());
  for (int s = 0; s + win_len <= n; s += win_len) {
    StateWindow w;
    std::copy(seq.betas.begin(), seq.betas.end(), w.shape.beta.begin());
    const Vec3 origin = states[s].r;
    PoseState first = states[s];
    first.r = first.r - origin;
    w.x0 = first.to_vec();
    w.targets.reserve(win_len - 1);
    for (int t = 1; t < win_len; ++t) {
      PoseState st = states[s + t];
      st.r = st.r - origin;
      w.targets.push_back(st.to_vec());
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

double elbo_loss(DvaeModel& model, const Tensor& x0, const std::vector<Tensor>& targets,
                 const BodyShape& shape, const ElboWeights& weights, std::uint64_t seed,
                 bool with_grad) {
  const int T = static_cast<int>(targets.size());
  if (T < 1) throw DataError("elbo_loss: need at least one target frame");
  if (static_cast<int>(x0.v.size()) != kStateDim)
    throw DataError("elbo_loss: x0 must have " + std::to_string(kStateDim) + " dims");
  for (const Tensor& t : targets)
    if (static_cast<int>(t.v.size()) != kStateDim)
      throw DataError("elbo_loss: target frame has wrong dimension");

  Tape tape;
  tape.reserve(static_cast<std::size_t>(T) * 1200 + 64);
  ParamBinder bind(tape, model.params);
  Rng rng(seed);

  Var x0_in = tape.constant(x0);
  Var x0e = dvae::embed_x0(bind, x0_in);

  std::vector<Var> x_in(targets.size());
  for (int t = 0; t < T; ++t) x_in[t] = tape.constant(targets[t]);
  std::vector<Var> g = dvae::backward_g(bind, model.cfg, x_in);

  Var h = tape.constant(Tensor::zeros({model.cfg.hidden}));
  Var loss = tape.constant(0.0);
  for (int t = 0; t < T; ++t) {
    GaussianHead prior = dvae::prior_step(bind, model.cfg, h, x0e);
    GaussianHead post = dvae::encode_step(bind, model.cfg, g[t], h, x0e);
    Var kl = kl_diag_gaussian(post.mu, post.var, prior.mu, prior.var);
    Var z = reparam(post.mu, post.var, rng.normal_vec(model.cfg.z_dim));
    h = dvae::advance_z(bind, z, h);
    Var mu_x = dvae::decode_step(bind, h, x0e);
    Var rec = 0.5 * sumsq(mu_x - x_in[t]);
    loss = loss + rec + weights.kl_scale * kl;
    if (weights.w_rec_mesh != 0.0) {
      Tensor y_target = forward_kinematics(PoseState::from_vec(targets[t]), shape).to_vec();
      Var mesh = sumsq(fk_obs_var(mu_x, shape) - tape.constant(y_target));
      loss = loss + weights.w_rec_mesh * mesh;
    }
  }
  loss = loss * (1.0 / T);

  double value = tape.val(loss).v[0];
  if (with_grad) {
    tape.backward(loss);
    bind.write_grads();
  }
  return value;
}

PriorTrainLog train_prior(DvaeModel& model, const std::vector<MotionSequence>& train,
                          const std::vector<MotionSequence>& val,
                          const PriorTrainConfig& config) {
  std::vector<StateWindow> train_w, val_w;
  for (const auto& seq : train)
    for (auto& w : cut_windows(seq, config.seq_len)) train_w.push_back(std::move(w));
  for (const auto& seq : val)
    for (auto& w : cut_windows(seq, config.seq_len)) val_w.push_back(std::move(w));
  if (train_w.empty())
    throw DataError("train_prior: no training windows of length " +
                    std::to_string(config.seq_len));

  const int steps_per_epoch =
      (static_cast<int>(train_w.size()) + config.batch - 1) / config.batch;
  const int total_steps = config.epochs * steps_per_epoch;
  const int warmup = std::max(1, static_cast<int>(config.kl_warmup * total_steps));

  PriorTrainLog log;
  int step = 0;
  const std::uint64_t val_seed = splitmix64(config.seed ^ 0x76A1);

  auto objective = [&](ParamSet&, Rng& rng) {
    ElboWeights w;
    w.w_rec_mesh = config.w_rec_mesh;
    w.kl_scale = std::min(1.0, static_cast<double>(step) / warmup);
    double total = 0;
    for (int i = 0; i < config.batch; ++i) {
      const StateWindow& win = train_w[rng.next_u64() % train_w.size()];
      total += elbo_loss(model, win.x0, win.targets, win.shape, w, rng.next_u64(), true);
    }
    ++step;
    if (step % steps_per_epoch == 0 && !val_w.empty()) {
      ElboWeights vw;
      vw.w_rec_mesh = config.w_rec_mesh;
      double v = 0;
      for (const StateWindow& win : val_w)
        v += elbo_loss(model, win.x0, win.targets, win.shape, vw, val_seed, false);
      log.val_loss.emplace_back(step, v / static_cast<double>(val_w.size()));
    }
    return total / config.batch;
  };

  AdamConfig ac;
  ac.lr = config.lr;
  ac.steps = total_steps;
  ac.seed = config.seed;
  log.train_loss = adam_minimize(objective, model.params, ac);
  return log;
}

namespace {

// Forward passes never call write_grads, so binding a const model's params is
// read-only in effect.
ParamSet& mutable_params(const DvaeModel& model) {
  return const_cast<ParamSet&>(model.params);
}

}  // namespace

std::vector<Tensor> generate(const DvaeModel& model, const Tensor& x0, int T,
                             std::uint64_t seed, bool zero_variance) {
  if (T < 1) throw DataError("generate: T must be at least 1");
  Tape tape;
  ParamBinder bind(tape, mutable_params(model));
  Rng rng(seed);
  Var x0e = dvae::embed_x0(bind, tape.constant(x0));
  Var h = tape.constant(Tensor::zeros({model.cfg.hidden}));
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    GaussianHead prior = dvae::prior_step(bind, model.cfg, h, x0e);
    Tensor z = tape.val(prior.mu);
    if (!zero_variance) {
      const Tensor& var = tape.val(prior.var);
      Tensor eps = rng.normal_vec(model.cfg.z_dim);
      for (std::size_t i = 0; i < z.v.size(); ++i)
        z.v[i] += std::sqrt(var.v[i]) * eps.v[i];
    }
    h = dvae::advance_z(bind, tape.constant(z), h);
    out.push_back(tape.val(dvae::decode_step(bind, h, x0e)));
  }
  return out;
}

LatentSeq encode_sequence(const DvaeModel& model, const std::vector<Tensor>& x_seq,
                          const Tensor& x0, std::uint64_t seed) {
  const int T = static_cast<int>(x_seq.size());
  if (T < 1) throw DataError("encode_sequence: need at least one frame");
  const int Z = model.cfg.z_dim;
  Tape tape;
  ParamBinder bind(tape, mutable_params(model));
  Rng rng(seed);

  Var x0e = dvae::embed_x0(bind, tape.constant(x0));
  std::vector<Var> x_in(x_seq.size());
  for (int t = 0; t < T; ++t) x_in[t] = tape.constant(x_seq[t]);
  std::vector<Var> g = dvae::backward_g(bind, model.cfg, x_in);

  LatentSeq seq;
  seq.z = Tensor::zeros({T, Z});
  seq.post_mu = Tensor::zeros({T, Z});
  seq.post_var = Tensor::zeros({T, Z});
  seq.prior_mu = Tensor::zeros({T, Z});
  seq.prior_var = Tensor::zeros({T, Z});

  Var h = tape.constant(Tensor::zeros({model.cfg.hidden}));
  for (int t = 0; t < T; ++t) {
    GaussianHead prior = dvae::prior_step(bind, model.cfg, h, x0e);
    GaussianHead post = dvae::encode_step(bind, model.cfg, g[t], h, x0e);
    Tensor z = tape.val(post.mu);
    Tensor eps = rng.normal_vec(Z);
    for (int k = 0; k < Z; ++k) {
      double pv = tape.val(post.var).v[k];
      z.v[k] += std::sqrt(pv) * eps.v[k];
      seq.z.at(t, k) = z.v[k];
      seq.post_mu.at(t, k) = tape.val(post.mu).v[k];
      seq.post_var.at(t, k) = pv;
      seq.prior_mu.at(t, k) = tape.val(prior.mu).v[k];
      seq.prior_var.at(t, k) = tape.val(prior.var).v[k];
    }
    h = dvae::advance_z(bind, tape.constant(z), h);
  }
  return seq;
}

std::vector<Tensor> decode_given_z(const DvaeModel& model, const Tensor& x0,
                                   const Tensor& z) {
  if (z.shape.size() != 2 || z.shape[1] != model.cfg.z_dim)
    throw DataError("decode_given_z: z must be {T, z_dim}, got " + z.shape_str());
  const int T = z.shape[0];
  Tape tape;
  ParamBinder bind(tape, mutable_params(model));
  Var x0e = dvae::embed_x0(bind, tape.constant(x0));
  Var h = tape.constant(Tensor::zeros({model.cfg.hidden}));
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Tensor zt{{model.cfg.z_dim}, std::vector<double>(
        z.v.begin() + static_cast<std::size_t>(t) * model.cfg.z_dim,
        z.v.begin() + static_cast<std::size_t>(t + 1) * model.cfg.z_dim)};
    h = dvae::advance_z(bind, tape.constant(zt), h);
    out.push_back(tape.val(dvae::decode_step(bind, h, x0e)));
  }
  return out;
}

std::vector<Tensor> encode_decode(const DvaeModel& model, const Tensor& x0,
                                  const std::vector<Tensor>& x_seq) {
  LatentSeq seq = encode_sequence(model, x_seq, x0, 0);
  return decode_given_z(model, x0, seq.post_mu);
}

}  // namespace mdn
