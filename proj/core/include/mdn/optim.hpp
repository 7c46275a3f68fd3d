#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "mdn/param_set.hpp"
#include "mdn/rng.hpp"
#include "mdn/tape.hpp"
#include "mdn/tensor.hpp"

namespace mdn {

struct AdamConfig {
  double lr = 1e-3;
  int steps = 0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Evaluates the loss and accumulates gradients into the set (grads are zeroed
// beforehand by the caller loop). rng is a per-step stream derived from the
// config seed, so an identical config replays identical draws.
using StepObjective = std::function<double(ParamSet&, Rng& rng)>;

// Runs Adam over the named groups (all groups when empty). Returns the loss
// before each step. Throws NumericError on a non-finite loss.
std::vector<double> adam_minimize(const StepObjective& objective, ParamSet& params,
                                  const AdamConfig& config,
                                  const std::set<std::string>& groups = {});

struct LbfgsConfig {
  int max_iters = 100;
  double tolerance = 1e-6;  // on the gradient infinity-norm-free l2 norm
  int history = 10;
};

struct LbfgsResult {
  Tensor x;
  double fx = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

using VecObjective = std::function<double(const Tensor& x, Tensor& grad)>;

// L-BFGS with a strong Wolfe line search. Objective values along accepted
// steps are non-increasing.
LbfgsResult lbfgs_minimize(const VecObjective& objective, Tensor init, const LbfgsConfig& config);

struct GradCheckReport {
  double max_rel_err = 0;
  std::string worst_name;
  int worst_index = -1;
};

// Central finite differences against the analytic gradient for every
// coordinate of every parameter (restricted to the named groups when given).
// The objective must be deterministic; with_grad=false evaluations must not
// touch the grads.
GradCheckReport grad_check(const std::function<double(ParamSet&, bool with_grad)>& objective,
                           ParamSet& params, double epsilon = 1e-5,
                           const std::set<std::string>& groups = {});

// KL(N(mu_q, diag var_q) || N(mu_p, diag var_p)). Throws std::domain_error on
// non-positive variances.
double gaussian_kl(const Tensor& mu_q, const Tensor& var_q, const Tensor& mu_p,
                   const Tensor& var_p);

// mu + sqrt(var) * eps with eps ~ N(0, I) drawn from the seed.
Tensor reparam_sample(const Tensor& mu, const Tensor& var, std::uint64_t seed);

// Tape composites used inside training losses.
Var reparam(Var mu, Var var, const Tensor& eps);
Var kl_diag_gaussian(Var mu_q, Var var_q, Var mu_p, Var var_p);  // scalar

}  // namespace mdn
