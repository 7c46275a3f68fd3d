#pragma once

#include <cstdint>
#include <random>

#include "mdn/tensor.hpp"

namespace mdn {

// Deterministic random stream. Child streams derived with fork() are
// independent of the parent state, so call sites can draw in any order
// without perturbing each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() { return gen_(); }
  double uniform();                      // [0, 1)
  double uniform(double a, double b);
  double normal();                       // standard normal
  Tensor normal_vec(int n);
  Tensor uniform_vec(int n, double a, double b);

  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace mdn
