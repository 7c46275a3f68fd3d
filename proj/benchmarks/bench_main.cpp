#include <benchmark/benchmark.h>

#include "mdn/kinematics.hpp"
#include "mdn/nets.hpp"
#include "mdn/noise_model.hpp"
#include "mdn/param_set.hpp"
#include "mdn/rng.hpp"
#include "mdn/tape.hpp"

namespace {

using namespace mdn;

void BM_TapeMatmul(benchmark::State& state) {
  int n = int(state.range(0));
  Rng rng(1);
  Tensor a = rng.normal_vec(n * n);
  Tensor b = rng.normal_vec(n * n);
  a.shape = {n, n};
  b.shape = {n, n};
  for (auto _ : state) {
    Tape tape;
    Var va = tape.leaf(a, true);
    Var vb = tape.leaf(b, true);
    Var c = sum(mm(va, vb));
    tape.backward(c);
    benchmark::DoNotOptimize(tape.grad(va).v[0]);
  }
  state.SetItemsProcessed(state.iterations() * int64_t(n) * n * n);
}

void BM_ForwardKinematics(benchmark::State& state) {
  Rng rng(2);
  PoseState st;
  st.r = {0.1, 0.9, -0.2};
  st.phi = {0.2, -0.1, 0.3};
  for (auto& t : st.theta) t = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
  BodyShape shape;
  for (auto _ : state) {
    Observation3D obs = forward_kinematics(st, shape);
    benchmark::DoNotOptimize(obs.joints[21].x);
  }
}

void BM_TapeForwardKinematicsGrad(benchmark::State& state) {
  Rng rng(3);
  PoseState st;
  st.r = {0.1, 0.9, -0.2};
  st.phi = {0.2, -0.1, 0.3};
  for (auto& t : st.theta) t = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
  Tensor sv = st.to_vec();
  BodyShape shape;
  for (auto _ : state) {
    Tape tape;
    Var s = tape.leaf(sv, true);
    Var obs = fk_obs_var(s, shape);
    Var loss = sumsq(obs);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(s).v[0]);
  }
}

void BM_GruUnrollGrad(benchmark::State& state) {
  int hidden = int(state.range(0));
  const int steps = 60, input = 138;
  Rng rng(4);
  ParamSet params;
  add_gru(params, "gru", input, hidden, "bench", rng);
  Tensor x0 = rng.normal_vec(input);
  for (auto _ : state) {
    Tape tape;
    ParamBinder bind(tape, params);
    Var x = tape.leaf(x0, true);
    Var h = tape.constant(Tensor::zeros({hidden}));
    for (int t = 0; t < steps; ++t) h = gru_step(bind, "gru", x, h);
    Var loss = sumsq(h);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(x).v[0]);
  }
  state.SetItemsProcessed(state.iterations() * steps);
}

void BM_IgMeanShrink(benchmark::State& state) {
  IgParams p{5.5, 7.25};
  for (auto _ : state) {
    double w = ig_mean_shrink(p);
    benchmark::DoNotOptimize(w);
  }
}

BENCHMARK(BM_TapeMatmul)->Arg(64)->Arg(256);
BENCHMARK(BM_ForwardKinematics);
BENCHMARK(BM_TapeForwardKinematicsGrad);
BENCHMARK(BM_GruUnrollGrad)->Arg(128)->Arg(256);
BENCHMARK(BM_IgMeanShrink);

}  // namespace

BENCHMARK_MAIN();
