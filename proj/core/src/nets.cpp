#include "mdn/nets.hpp"

#include <cmath>

namespace mdn {
namespace {

Tensor xavier(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / (rows + cols));
  Tensor w = rng.uniform_vec(rows * cols, -limit, limit);
  w.shape = {rows, cols};
  return w;
}

}  // namespace

void add_linear(ParamSet& p, const std::string& prefix, int in, int out,
                const std::string& group, Rng& rng) {
  p.add(prefix + ".w", xavier(out, in, rng), group);
  p.add(prefix + ".b", Tensor::zeros({out}), group);
}

void add_mlp2(ParamSet& p, const std::string& prefix, int in, int hidden, int out,
              const std::string& group, Rng& rng) {
  p.add(prefix + ".w1", xavier(hidden, in, rng), group);
  p.add(prefix + ".b1", Tensor::zeros({hidden}), group);
  p.add(prefix + ".w2", xavier(out, hidden, rng), group);
  p.add(prefix + ".b2", Tensor::zeros({out}), group);
}

void add_gru(ParamSet& p, const std::string& prefix, int input, int hidden,
             const std::string& group, Rng& rng) {
  for (const char* gate : {"u", "r", "n"}) {
    p.add(prefix + ".w" + gate, xavier(hidden, input + hidden, rng), group);
    p.add(prefix + ".b" + gate, Tensor::zeros({hidden}), group);
  }
}

Var linear_fwd(ParamBinder& b, const std::string& prefix, Var x) {
  return linear(b(prefix + ".w"), x, b(prefix + ".b"));
}

Var mlp2(ParamBinder& b, const std::string& prefix, Var x) {
  Var h = tanh(linear(b(prefix + ".w1"), x, b(prefix + ".b1")));
  return linear(b(prefix + ".w2"), h, b(prefix + ".b2"));
}

Var gru_step(ParamBinder& b, const std::string& prefix, Var x, Var h) {
  Var xh = concat(x, h);
  Var u = sigmoid(linear(b(prefix + ".wu"), xh, b(prefix + ".bu")));
  Var r = sigmoid(linear(b(prefix + ".wr"), xh, b(prefix + ".br")));
  Var n = tanh(linear(b(prefix + ".wn"), concat(x, r * h), b(prefix + ".bn")));
  return (1.0 - u) * n + u * h;
}

GaussianHead gaussian_head(Var out2d, int d, double var_floor) {
  Var mu = slice(out2d, 0, d);
  Var var = softplus(slice(out2d, d, d)) + var_floor;
  return {mu, var};
}

}  // namespace mdn
