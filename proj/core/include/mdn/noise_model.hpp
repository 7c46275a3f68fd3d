#pragma once

#include <utility>
#include <vector>

#include "mdn/special.hpp"
#include "mdn/tape.hpp"

namespace mdn {

// Inverse-gamma distribution over a per-coordinate noise variance v:
//   p(v) = beta^alpha / Gamma(alpha) * v^-(alpha+1) * exp(-beta/v)
struct IgParams {
  double alpha = 1;
  double beta = 1;
};

double ig_log_pdf(double v, const IgParams& p);
double ig_mode(const IgParams& p);          // beta / (alpha + 1)
double ig_mean_inverse(const IgParams& p);  // E[1/v] = alpha / beta
double ig_kl(const IgParams& q, const IgParams& p);

// Density of the standard Student-t with dof degrees of freedom; equals the
// inverse-gamma mixture of zero-mean Gaussians with v ~ IG(dof/2, dof/2).
double student_t_log_pdf(double x, double dof);

IgParams ig_noise_prior(double lambda);  // IG(lambda/2, lambda/2)

// Posterior over v after observing y with predicted mean m under a Gaussian
// likelihood and the IG(lambda/2, lambda/2) prior.
IgParams conjugate_ig_posterior(double y, double m, double lambda);

// E[v / (v + 1)] under IG(alpha, beta), the per-coordinate weight that blends
// a predicted mean with the raw observation. Fixed 32-point Gauss-Legendre
// rule on the identity E[1/(1+w)] = int_0^1 (beta/(beta - ln s))^alpha ds
// with w = beta/v ~ Gamma(alpha).
double ig_mean_shrink(const IgParams& p);

struct GlPoint {
  double x;
  double w;
};

// Gauss-Legendre nodes and weights on [0,1], cached per order.
const std::vector<GlPoint>& gauss_legendre_unit(int n);

// Sum over coordinates of KL(IG(alpha_i, beta_i) || IG(lambda/2, lambda/2)),
// differentiable in alpha and beta.
Var ig_kl_to_prior(Var alpha, Var beta, double lambda);

}  // namespace mdn
