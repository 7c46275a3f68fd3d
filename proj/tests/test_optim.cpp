#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mdn/errors.hpp"
#include "mdn/optim.hpp"
#include "test_util.hpp"

using namespace mdn;

TEST_CASE("adam with zero steps leaves parameters unchanged") {
  ParamSet ps;
  ps.add("w", Tensor::vector({1, 2, 3}), "g");
  Tensor before = ps.value("w");
  AdamConfig cfg;
  cfg.steps = 0;
  auto trace = adam_minimize([](ParamSet&, Rng&) { return 0.0; }, ps, cfg);
  CHECK(trace.empty());
  CHECK(ps.value("w").v == before.v);
}

TEST_CASE("adam drives a quadratic towards its minimum") {
  ParamSet ps;
  ps.add("w", Tensor::vector({5, -3, 8, 1}), "g");
  auto objective = [](ParamSet& p, Rng&) {
    const Tensor& w = p.value("w");
    Tensor& g = p.grad("w");
    double loss = 0;
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      loss += 0.5 * w.v[i] * w.v[i];
      g.v[i] += w.v[i];
    }
    return loss;
  };
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.steps = 2000;
  auto trace = adam_minimize(objective, ps, cfg);
  CHECK(trace.front() > 1.0);
  CHECK(trace.back() < 1e-4);
  for (double w : ps.value("w").v) CHECK(std::abs(w) < 0.05);
}

TEST_CASE("adam ignores parameters outside the selected groups") {
  ParamSet ps;
  ps.add("train_me", Tensor::vector({4.0}), "trainable");
  ps.add("frozen", Tensor::vector({4.0}), "fixed");
  auto objective = [](ParamSet& p, Rng&) {
    double loss = 0;
    for (const char* n : {"train_me", "frozen"}) {
      double w = p.value(n).v[0];
      loss += 0.5 * w * w;
      p.grad(n).v[0] += w;
    }
    return loss;
  };
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.steps = 300;
  adam_minimize(objective, ps, cfg, {"trainable"});
  CHECK(std::abs(ps.value("train_me").v[0]) < 0.05);
  CHECK(ps.value("frozen").v[0] == 4.0);
}

TEST_CASE("adam aborts on non-finite loss with the step index") {
  ParamSet ps;
  ps.add("w", Tensor::vector({1.0}), "g");
  int call = 0;
  auto objective = [&](ParamSet&, Rng&) -> double {
    return call++ < 3 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  };
  AdamConfig cfg;
  cfg.steps = 10;
  CHECK_THROWS_WITH_AS(adam_minimize(objective, ps, cfg),
                       "adam_minimize: non-finite loss at step 3", NumericError);
}

TEST_CASE("adam replays identically for the same seed") {
  auto run = [](std::uint64_t seed) {
    ParamSet ps;
    ps.add("w", Tensor::vector({2, -1}), "g");
    auto objective = [](ParamSet& p, Rng& rng) {
      const Tensor& w = p.value("w");
      Tensor& g = p.grad("w");
      double loss = 0;
      for (std::size_t i = 0; i < w.v.size(); ++i) {
        double noise = 0.1 * rng.normal();
        loss += 0.5 * (w.v[i] + noise) * (w.v[i] + noise);
        g.v[i] += w.v[i] + noise;
      }
      return loss;
    };
    AdamConfig cfg;
    cfg.steps = 50;
    cfg.seed = seed;
    adam_minimize(objective, ps, cfg);
    return ps.value("w").v;
  };
  CHECK(run(11) == run(11));
  CHECK(run(11) != run(12));
}

namespace {

VecObjective quadratic_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return [a, b](const Tensor& x, Tensor& grad) {
    Eigen::VectorXd xe = Eigen::Map<const Eigen::VectorXd>(x.v.data(), x.v.size());
    Eigen::VectorXd g = a * xe - b;
    Eigen::Map<Eigen::VectorXd>(grad.v.data(), grad.v.size()) = g;
    return 0.5 * xe.dot(a * xe) - b.dot(xe);
  };
}

}  // namespace

TEST_CASE("lbfgs solves an SPD quadratic to the direct-solve answer") {
  int n = 5;
  Eigen::MatrixXd m = Eigen::MatrixXd::Random(n, n);
  Eigen::MatrixXd a = m.transpose() * m + n * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Random(n);
  Eigen::VectorXd direct = a.ldlt().solve(b);

  LbfgsConfig cfg;
  cfg.max_iters = 200;
  cfg.tolerance = 1e-12;
  LbfgsResult res = lbfgs_minimize(quadratic_objective(a, b), Tensor::zeros({n}), cfg);
  CHECK(res.converged);
  for (int i = 0; i < n; ++i) CHECK(res.x.v[i] == doctest::Approx(direct[i]).epsilon(1e-8));
}

TEST_CASE("lbfgs started at the minimum returns immediately") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
  LbfgsResult res = lbfgs_minimize(quadratic_objective(a, b), Tensor::zeros({3}), LbfgsConfig{});
  CHECK(res.converged);
  CHECK(res.iterations == 0);
}

TEST_CASE("lbfgs conquers the rosenbrock valley") {
  auto rosen = [](const Tensor& x, Tensor& g) {
    double a = x.v[0], b = x.v[1];
    g.v[0] = -2 * (1 - a) - 400 * a * (b - a * a);
    g.v[1] = 200 * (b - a * a);
    return (1 - a) * (1 - a) + 100 * (b - a * a) * (b - a * a);
  };
  LbfgsConfig cfg;
  cfg.max_iters = 300;
  cfg.tolerance = 1e-8;
  LbfgsResult res = lbfgs_minimize(rosen, Tensor::vector({-1.2, 1.0}), cfg);
  CHECK(res.converged);
  CHECK(res.x.v[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.x.v[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lbfgs objective is monotone along accepted steps") {
  // Track every evaluation; compare the accepted-iterate path via re-runs.
  Eigen::MatrixXd m = Eigen::MatrixXd::Random(8, 8);
  Eigen::MatrixXd a = m.transpose() * m + Eigen::MatrixXd::Identity(8, 8);
  Eigen::VectorXd b = Eigen::VectorXd::Ones(8);
  auto base = quadratic_objective(a, b);

  double last = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (int iters = 1; iters <= 12; ++iters) {
    LbfgsConfig cfg;
    cfg.max_iters = iters;
    cfg.tolerance = 0;
    LbfgsResult res = lbfgs_minimize(base, Tensor::zeros({8}), cfg);
    if (res.fx > last + 1e-12) monotone = false;
    last = res.fx;
  }
  CHECK(monotone);
}

TEST_CASE("grad_check accepts a correct gradient and flags a corrupted one") {
  ParamSet ps;
  ps.add("w", Rng(3).uniform_vec(6, -1, 1), "g");
  auto good = [](ParamSet& p, bool with_grad) {
    const Tensor& w = p.value("w");
    double loss = 0;
    for (std::size_t i = 0; i < w.v.size(); ++i) loss += std::sin(w.v[i]) + 0.5 * w.v[i] * w.v[i];
    if (with_grad) {
      Tensor& g = p.grad("w");
      for (std::size_t i = 0; i < w.v.size(); ++i) g.v[i] += std::cos(w.v[i]) + w.v[i];
    }
    return loss;
  };
  CHECK(grad_check(good, ps).max_rel_err <= 1e-4);

  auto bad = [&](ParamSet& p, bool with_grad) {
    double loss = good(p, with_grad);
    if (with_grad) p.grad("w").v[2] += 0.5;  // corrupt one coordinate
    return loss;
  };
  GradCheckReport rep = grad_check(bad, ps);
  CHECK(rep.max_rel_err > 0.05);
  CHECK(rep.worst_name == "w");
  CHECK(rep.worst_index == 2);
}

TEST_CASE("gaussian_kl of identical distributions is zero") {
  Tensor mu = Rng(5).normal_vec(6);
  Tensor var = Rng(6).uniform_vec(6, 0.2, 2.0);
  CHECK(gaussian_kl(mu, var, mu, var) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gaussian_kl matches the closed form in one dimension") {
  // KL(N(1, 4) || N(0, 1)) = 0.5*(ln(1/4) + 4 + 1 - 1) = 0.5*(4 - ln 4)
  Tensor mq = Tensor::vector({1});
  Tensor vq = Tensor::vector({4});
  Tensor mp = Tensor::vector({0});
  Tensor vp = Tensor::vector({1});
  CHECK(gaussian_kl(mq, vq, mp, vp) == doctest::Approx(0.5 * (4 - std::log(4.0))));
}

TEST_CASE("gaussian_kl agrees with a monte-carlo estimate") {
  int dims = 8;
  Tensor mq = Rng(71).normal_vec(dims);
  Tensor vq = Rng(72).uniform_vec(dims, 0.3, 1.5);
  Tensor mp = Rng(73).normal_vec(dims);
  Tensor vp = Rng(74).uniform_vec(dims, 0.3, 1.5);
  double analytic = gaussian_kl(mq, vq, mp, vp);

  auto draw = [&](Rng& rng) {
    double acc = 0;
    for (int i = 0; i < dims; ++i) {
      double x = mq.v[i] + std::sqrt(vq.v[i]) * rng.normal();
      double lq = -0.5 * std::log(2 * M_PI * vq.v[i]) - 0.5 * (x - mq.v[i]) * (x - mq.v[i]) / vq.v[i];
      double lp = -0.5 * std::log(2 * M_PI * vp.v[i]) - 0.5 * (x - mp.v[i]) * (x - mp.v[i]) / vp.v[i];
      acc += lq - lp;
    }
    return acc;
  };
  auto mc = testutil::mc_mean(draw, 1000000, 777);
  CHECK(std::abs(analytic - mc.mean) <= 3 * mc.se);
}

TEST_CASE("gaussian_kl rejects non-positive variances") {
  Tensor mu = Tensor::vector({0});
  CHECK_THROWS_AS(gaussian_kl(mu, Tensor::vector({0}), mu, Tensor::vector({1})),
                  std::domain_error);
  CHECK_THROWS_AS(gaussian_kl(mu, Tensor::vector({1}), mu, Tensor::vector({-2})),
                  std::domain_error);
}

TEST_CASE("reparam_sample with zero variance returns the mean exactly") {
  Tensor mu = Rng(81).normal_vec(5);
  Tensor var = Tensor::zeros({5});
  CHECK(reparam_sample(mu, var, 9).v == mu.v);
}

TEST_CASE("reparam_sample statistics match the target moments") {
  Tensor mu = Tensor::vector({2.0, -1.0});
  Tensor var = Tensor::vector({0.25, 4.0});
  double s0 = 0, s1 = 0, q0 = 0, q1 = 0;
  int n = 200000;
  for (int i = 0; i < n; ++i) {
    Tensor x = reparam_sample(mu, var, 1000 + i);
    s0 += x.v[0];
    s1 += x.v[1];
    q0 += (x.v[0] - 2.0) * (x.v[0] - 2.0);
    q1 += (x.v[1] + 1.0) * (x.v[1] + 1.0);
  }
  CHECK(s0 / n == doctest::Approx(2.0).epsilon(0.01));
  CHECK(s1 / n == doctest::Approx(-1.0).epsilon(0.02));
  CHECK(q0 / n == doctest::Approx(0.25).epsilon(0.02));
  CHECK(q1 / n == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("tape reparam and kl composites match plain versions and finite differences") {
  Tensor mu = Rng(91).normal_vec(6);
  Tensor var = Rng(92).uniform_vec(6, 0.3, 2.0);
  Tensor mp = Rng(93).normal_vec(6);
  Tensor vp = Rng(94).uniform_vec(6, 0.3, 2.0);
  Tensor eps = Rng(95).normal_vec(6);

  Tape tape;
  Var vmu = tape.leaf(mu, true);
  Var vvar = tape.leaf(var, true);
  Var z = reparam(vmu, vvar, eps);
  for (int i = 0; i < 6; ++i)
    CHECK(tape.val(z).v[i] == doctest::Approx(mu.v[i] + std::sqrt(var.v[i]) * eps.v[i]));

  Var kl = kl_diag_gaussian(vmu, vvar, tape.leaf(mp), tape.leaf(vp));
  CHECK(tape.val(kl).v[0] == doctest::Approx(gaussian_kl(mu, var, mp, vp)));

  double err_mu = testutil::fd_check(
      [&](Tape& t, Var v) {
        return kl_diag_gaussian(v, t.leaf(var), t.leaf(mp), t.leaf(vp));
      },
      mu);
  double err_var = testutil::fd_check(
      [&](Tape& t, Var v) {
        return kl_diag_gaussian(t.leaf(mu), v, t.leaf(mp), t.leaf(vp));
      },
      var);
  CHECK(err_mu <= 1e-4);
  CHECK(err_var <= 1e-4);
}
