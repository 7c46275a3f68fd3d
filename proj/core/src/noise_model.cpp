#include "mdn/noise_model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace mdn {

namespace {

void check_ig(const IgParams& p) {
  if (!(p.alpha > 0) || !(p.beta > 0))
    throw std::domain_error("inverse-gamma parameters must be positive");
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

double ig_log_pdf(double v, const IgParams& p) {
  check_ig(p);
  if (!(v > 0)) throw std::domain_error("ig_log_pdf: v must be positive");
  return p.alpha * std::log(p.beta) - lgamma_pos(p.alpha) - (p.alpha + 1.0) * std::log(v) -
         p.beta / v;
}

double ig_mode(const IgParams& p) {
  check_ig(p);
  return p.beta / (p.alpha + 1.0);
}

double ig_mean_inverse(const IgParams& p) {
  check_ig(p);
  return p.alpha / p.beta;
}

double ig_kl(const IgParams& q, const IgParams& p) {
  check_ig(q);
  check_ig(p);
  return (q.alpha - p.alpha) * digamma(q.alpha) + lgamma_pos(p.alpha) - lgamma_pos(q.alpha) +
         p.alpha * (std::log(q.beta) - std::log(p.beta)) + q.alpha * (p.beta - q.beta) / q.beta;
}

double student_t_log_pdf(double x, double dof) {
  if (!(dof > 0)) throw std::domain_error("student_t_log_pdf: dof must be positive");
  return lgamma_pos(0.5 * (dof + 1.0)) - lgamma_pos(0.5 * dof) - 0.5 * std::log(dof * kPi) -
         0.5 * (dof + 1.0) * std::log1p(x * x / dof);
}

IgParams ig_noise_prior(double lambda) {
  if (!(lambda > 0)) throw std::domain_error("ig_noise_prior: lambda must be positive");
  return IgParams{0.5 * lambda, 0.5 * lambda};
}

IgParams conjugate_ig_posterior(double y, double m, double lambda) {
  if (!(lambda > 0)) throw std::domain_error("conjugate_ig_posterior: lambda must be positive");
  double r = y - m;
  return IgParams{0.5 * lambda + 0.5, 0.5 * lambda + 0.5 * r * r};
}

const std::vector<GlPoint>& gauss_legendre_unit(int n) {
  static std::map<int, std::vector<GlPoint>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw std::invalid_argument("gauss_legendre_unit: order must be >= 1");

  std::vector<GlPoint> pts(static_cast<std::size_t>(n));
  int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    pts[static_cast<std::size_t>(i)] = {0.5 * (1.0 - x), 0.5 * w};
    pts[static_cast<std::size_t>(n - 1 - i)] = {0.5 * (1.0 + x), 0.5 * w};
  }
  auto [ins, ok] = cache.emplace(n, std::move(pts));
  return ins->second;
}

double ig_mean_shrink(const IgParams& p) {
  check_ig(p);
  const auto& pts = gauss_legendre_unit(32);
  double acc = 0;
  for (const auto& q : pts) {
    // (beta / (beta - ln s))^alpha, written through log1p for stability.
    double t = std::log1p(-std::log(q.x) / p.beta);
    acc += q.w * std::exp(-p.alpha * t);
  }
  return acc;
}

Var ig_kl_to_prior(Var alpha, Var beta, double lambda) {
  if (!(lambda > 0)) throw std::domain_error("ig_kl_to_prior: lambda must be positive");
  double a2 = 0.5 * lambda, b2 = 0.5 * lambda;
  Var term1 = mul(add_const(alpha, -a2), digamma(alpha));
  Var term2 = neg(lgamma(alpha));
  Var term3 = scale(log(beta), a2);
  Var term4 = mul(alpha, div(add_const(neg(beta), b2), beta));
  Var per = add(add(term1, term2), add(term3, term4));
  double n = static_cast<double>(alpha.tape->val(alpha).numel());
  return add_const(sum(per), n * (lgamma_pos(a2) - a2 * std::log(b2)));
}

}  // namespace mdn
