#pragma once

#include <string>

#include "mdn/param_set.hpp"
#include "mdn/rng.hpp"
#include "mdn/tape.hpp"

namespace mdn {

// Registration helpers. Weights are Xavier-uniform over fan-in + fan-out,
// biases start at zero. Names are "<prefix>.w"/"<prefix>.b" for a linear
// layer, "<prefix>.w1/.b1/.w2/.b2" for the two-layer perceptron, and
// "<prefix>.wu/.bu/.wr/.br/.wn/.bn" for the GRU gates.
void add_linear(ParamSet& p, const std::string& prefix, int in, int out,
                const std::string& group, Rng& rng);
void add_mlp2(ParamSet& p, const std::string& prefix, int in, int hidden, int out,
              const std::string& group, Rng& rng);
void add_gru(ParamSet& p, const std::string& prefix, int input, int hidden,
             const std::string& group, Rng& rng);

// Tape-side evaluation against the names registered above. The binder caches
// leaves, so calling these repeatedly inside a sequence loop reuses one leaf
// per parameter.
Var linear_fwd(ParamBinder& b, const std::string& prefix, Var x);
Var mlp2(ParamBinder& b, const std::string& prefix, Var x);  // tanh hidden

// Gated recurrent unit: u and r gates on [x, h], candidate on [x, r*h],
// h' = (1-u)*n + u*h.
Var gru_step(ParamBinder& b, const std::string& prefix, Var x, Var h);

struct GaussianHead {
  Var mu;
  Var var;
};

// Splits a 2d-vector into a mean and a softplus variance with a positive floor.
GaussianHead gaussian_head(Var out2d, int d, double var_floor);

}  // namespace mdn
