#include "mdn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>

#include "mdn/errors.hpp"

namespace mdn {

std::vector<double> adam_minimize(const StepObjective& objective, ParamSet& params,
                                  const AdamConfig& config, const std::set<std::string>& groups) {
  std::vector<std::string> names =
      groups.empty() ? params.names() : params.names_in_groups(groups);
  std::map<std::string, Tensor> m1, m2;
  for (const auto& n : names) {
    m1.emplace(n, Tensor::zeros(params.value(n).shape));
    m2.emplace(n, Tensor::zeros(params.value(n).shape));
  }

  Rng base(config.seed);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(std::max(config.steps, 0)));

  for (int step = 0; step < config.steps; ++step) {
    params.zero_grads();
    Rng step_rng = base.fork(static_cast<std::uint64_t>(step));
    double loss = objective(params, step_rng);
    if (!std::isfinite(loss))
      throw NumericError("adam_minimize: non-finite loss at step " + std::to_string(step));
    trace.push_back(loss);

    double t = static_cast<double>(step + 1);
    double bc1 = 1.0 - std::pow(config.beta1, t);
    double bc2 = 1.0 - std::pow(config.beta2, t);
    for (const auto& n : names) {
      Tensor& w = params.value(n);
      const Tensor& g = params.grad(n);
      Tensor& m = m1[n];
      Tensor& v = m2[n];
      for (std::size_t i = 0; i < w.v.size(); ++i) {
        m.v[i] = config.beta1 * m.v[i] + (1.0 - config.beta1) * g.v[i];
        v.v[i] = config.beta2 * v.v[i] + (1.0 - config.beta2) * g.v[i] * g.v[i];
        double mhat = m.v[i] / bc1;
        double vhat = v.v[i] / bc2;
        w.v[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
      }
    }
  }
  return trace;
}

namespace {

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double vnorm(const std::vector<double>& a) { return std::sqrt(vdot(a, a)); }

struct LinePoint {
  double alpha;
  double f;
  double dphi;
  Tensor x;
  Tensor g;
};

struct LineSearchEnv {
  const VecObjective& objective;
  const Tensor& x0;
  const Tensor& d;
  double f0;
  double dphi0;
};

LinePoint ls_eval(const LineSearchEnv& env, double alpha) {
  LinePoint p;
  p.alpha = alpha;
  p.x = env.x0;
  for (std::size_t i = 0; i < p.x.v.size(); ++i) p.x.v[i] += alpha * env.d.v[i];
  p.g = Tensor::zeros(p.x.shape);
  p.f = env.objective(p.x, p.g);
  p.dphi = vdot(p.g.v, env.d.v);
  return p;
}

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;

// Strong Wolfe bracketing + zoom. Returns true and fills out on success.
bool line_search_wolfe(const LineSearchEnv& env, double alpha_init, LinePoint& out) {
  double alpha_prev = 0;
  double f_prev = env.f0;
  double alpha = alpha_init;
  LinePoint lo, hi;
  bool bracketed = false;
  // Near a minimum the true decrease drops below the rounding error of f
  // itself; allow that much slack so the curvature test can still accept.
  const double fslack = 1e-14 * std::max(1.0, std::abs(env.f0));

  for (int it = 0; it < 25 && !bracketed; ++it) {
    LinePoint p = ls_eval(env, alpha);
    if (!std::isfinite(p.f) || p.f > env.f0 + kC1 * alpha * env.dphi0 + fslack ||
        (it > 0 && p.f >= f_prev)) {
      lo = ls_eval(env, alpha_prev);
      hi = p;
      bracketed = true;
      break;
    }
    if (std::abs(p.dphi) <= -kC2 * env.dphi0) {
      out = p;
      return true;
    }
    if (p.dphi >= 0) {
      lo = p;
      hi = ls_eval(env, alpha_prev);
      bracketed = true;
      break;
    }
    alpha_prev = alpha;
    f_prev = p.f;
    alpha = std::min(2.0 * alpha, 1e6);
  }
  if (!bracketed) return false;

  for (int it = 0; it < 40; ++it) {
    double alpha_mid = 0.5 * (lo.alpha + hi.alpha);
    if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
    LinePoint p = ls_eval(env, alpha_mid);
    if (!std::isfinite(p.f) || p.f > env.f0 + kC1 * p.alpha * env.dphi0 + fslack || p.f >= lo.f) {
      hi = p;
    } else {
      if (std::abs(p.dphi) <= -kC2 * env.dphi0) {
        out = p;
        return true;
      }
      if (p.dphi * (hi.alpha - lo.alpha) >= 0) hi = lo;
      lo = p;
    }
  }
  // Fall back to the best sufficient-decrease point found.
  if (lo.alpha > 0 && lo.f < env.f0) {
    out = lo;
    return true;
  }
  return false;
}

}  // namespace

LbfgsResult lbfgs_minimize(const VecObjective& objective, Tensor init, const LbfgsConfig& config) {
  LbfgsResult res;
  res.x = std::move(init);
  Tensor g = Tensor::zeros(res.x.shape);
  res.fx = objective(res.x, g);
  if (!std::isfinite(res.fx)) throw NumericError("lbfgs_minimize: non-finite objective at init");
  res.grad_norm = vnorm(g.v);
  if (res.grad_norm <= config.tolerance) {
    res.converged = true;
    return res;
  }

  std::deque<std::pair<std::vector<double>, std::vector<double>>> pairs;  // (s, y)
  std::size_t n = res.x.numel();

  for (int iter = 0; iter < config.max_iters; ++iter) {
    // Two-loop recursion for d = -H*g.
    std::vector<double> q = g.v;
    std::vector<double> alpha_hist(pairs.size());
    for (int i = static_cast<int>(pairs.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = pairs[static_cast<std::size_t>(i)];
      double rho = 1.0 / vdot(y, s);
      double a = rho * vdot(s, q);
      alpha_hist[static_cast<std::size_t>(i)] = a;
      for (std::size_t j = 0; j < n; ++j) q[j] -= a * y[j];
    }
    if (!pairs.empty()) {
      const auto& [s, y] = pairs.back();
      double gamma = vdot(s, y) / vdot(y, y);
      for (double& x : q) x *= gamma;
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& [s, y] = pairs[i];
      double rho = 1.0 / vdot(y, s);
      double b = rho * vdot(y, q);
      double a = alpha_hist[i];
      for (std::size_t j = 0; j < n; ++j) q[j] += (a - b) * s[j];
    }
    Tensor d = Tensor::zeros(res.x.shape);
    for (std::size_t j = 0; j < n; ++j) d.v[j] = -q[j];

    double dphi0 = vdot(g.v, d.v);
    if (dphi0 >= 0) {
      // Direction lost descent; restart from steepest descent.
      pairs.clear();
      for (std::size_t j = 0; j < n; ++j) d.v[j] = -g.v[j];
      dphi0 = -vdot(g.v, g.v);
    }

    double alpha0 = 1.0;
    if (iter == 0) {
      double l1 = 0;
      for (double x : g.v) l1 += std::abs(x);
      alpha0 = std::min(1.0, 1.0 / std::max(l1, 1e-12));
    }

    LineSearchEnv env{objective, res.x, d, res.fx, dphi0};
    LinePoint accepted;
    if (!line_search_wolfe(env, alpha0, accepted)) {
      res.line_search_failed = true;
      break;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = accepted.x.v[j] - res.x.v[j];
      y[j] = accepted.g.v[j] - g.v[j];
    }
    double sy = vdot(s, y);
    if (sy > 1e-10 * vnorm(s) * vnorm(y)) {
      pairs.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(pairs.size()) > config.history) pairs.pop_front();
    }

    res.x = std::move(accepted.x);
    res.fx = accepted.f;
    g = std::move(accepted.g);
    res.grad_norm = vnorm(g.v);
    res.iterations = iter + 1;
    if (res.grad_norm <= config.tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

GradCheckReport grad_check(const std::function<double(ParamSet&, bool with_grad)>& objective,
                           ParamSet& params, double epsilon,
                           const std::set<std::string>& groups) {
  params.zero_grads();
  double f0 = objective(params, true);
  if (!std::isfinite(f0)) throw NumericError("grad_check: non-finite objective");

  const std::vector<std::string> names =
      groups.empty() ? params.names() : params.names_in_groups(groups);
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& name : names) analytic[name] = params.grad(name).v;

  GradCheckReport report;
  for (const auto& name : names) {
    Tensor& w = params.value(name);
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      double orig = w.v[i];
      w.v[i] = orig + epsilon;
      double fp = objective(params, false);
      w.v[i] = orig - epsilon;
      double fm = objective(params, false);
      w.v[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite objective near " + name);
      double gfd = (fp - fm) / (2.0 * epsilon);
      double ga = analytic[name][i];
      double rel = std::abs(ga - gfd) / std::max({std::abs(ga), std::abs(gfd), 1e-3});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_name = name;
        report.worst_index = static_cast<int>(i);
      }
    }
  }
  return report;
}

double gaussian_kl(const Tensor& mu_q, const Tensor& var_q, const Tensor& mu_p,
                   const Tensor& var_p) {
  if (!mu_q.same_shape(var_q) || !mu_q.same_shape(mu_p) || !mu_q.same_shape(var_p))
    throw std::invalid_argument("gaussian_kl: shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < mu_q.v.size(); ++i) {
    double vq = var_q.v[i], vp = var_p.v[i];
    if (!(vq > 0) || !(vp > 0)) throw std::domain_error("gaussian_kl: variances must be positive");
    double dm = mu_q.v[i] - mu_p.v[i];
    acc += 0.5 * (std::log(vp / vq) + (vq + dm * dm) / vp - 1.0);
  }
  return acc;
}

Tensor reparam_sample(const Tensor& mu, const Tensor& var, std::uint64_t seed) {
  if (!mu.same_shape(var)) throw std::invalid_argument("reparam_sample: shape mismatch");
  Rng rng(seed);
  Tensor out = mu;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    if (var.v[i] < 0) throw std::domain_error("reparam_sample: negative variance");
    out.v[i] += std::sqrt(var.v[i]) * rng.normal();
  }
  return out;
}

Var reparam(Var mu, Var var, const Tensor& eps) {
  Var e = mu.tape->constant(eps);
  return add(mu, mul(sqrt(var), e));
}

Var kl_diag_gaussian(Var mu_q, Var var_q, Var mu_p, Var var_p) {
  Var d = sub(mu_q, mu_p);
  Var per = add(sub(log(var_p), log(var_q)), div(add(var_q, mul(d, d)), var_p));
  double n = static_cast<double>(mu_q.tape->val(mu_q).numel());
  return add_const(scale(sum(per), 0.5), -0.5 * n);
}

}  // namespace mdn
