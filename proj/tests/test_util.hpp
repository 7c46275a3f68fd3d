#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mdn/rng.hpp"
#include "mdn/tape.hpp"
#include "mdn/tensor.hpp"

namespace testutil {

// Central finite differences through a scalar tape function of one tensor.
// Returns max relative error against the analytic gradient.
inline double fd_check(const std::function<mdn::Var(mdn::Tape&, mdn::Var)>& f, mdn::Tensor x,
                       double eps = 1e-5) {
  mdn::Tape tape;
  mdn::Var in = tape.leaf(x, true);
  mdn::Var out = f(tape, in);
  tape.backward(out);
  mdn::Tensor analytic = tape.grad(in);

  double worst = 0;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    double orig = x.v[i];
    auto eval = [&](double xv) {
      x.v[i] = xv;
      mdn::Tape t2;
      mdn::Var v = f(t2, t2.leaf(x, false));
      return t2.val(v).v[0];
    };
    double fp = eval(orig + eps);
    double fm = eval(orig - eps);
    x.v[i] = orig;
    double gfd = (fp - fm) / (2 * eps);
    double ga = analytic.v.empty() ? 0.0 : analytic.v[i];
    double rel = std::abs(ga - gfd) / std::max({std::abs(ga), std::abs(gfd), 1e-3});
    worst = std::max(worst, rel);
  }
  return worst;
}

// Marsaglia-Tsang gamma sampler, shape k >= 0 (rate 1). Independent of the
// production code paths; used for Monte-Carlo oracles.
inline double gamma_sample(mdn::Rng& rng, double k) {
  if (k < 1.0) {
    double u = rng.uniform();
    return gamma_sample(rng, k + 1.0) * std::pow(u, 1.0 / k);
  }
  double d = k - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0) continue;
    v = v * v * v;
    double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

struct McStat {
  double mean = 0;
  double se = 0;
};

inline McStat mc_mean(const std::function<double(mdn::Rng&)>& draw, int n, std::uint64_t seed) {
  mdn::Rng rng(seed);
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = draw(rng);
    s += x;
    s2 += x * x;
  }
  McStat st;
  st.mean = s / n;
  double var = std::max(0.0, s2 / n - st.mean * st.mean);
  st.se = std::sqrt(var / n);
  return st;
}

}  // namespace testutil
