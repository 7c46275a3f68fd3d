#include "mdn/special.hpp"

#include <cmath>
#include <stdexcept>

namespace mdn {

double lgamma_pos(double x) {
  if (!(x > 0)) throw std::domain_error("lgamma_pos: x must be positive");
  return std::lgamma(x);
}

double digamma(double x) {
  if (!(x > 0)) throw std::domain_error("digamma: x must be positive");
  double r = 0.0;
  while (x < 10.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x, inv2 = inv * inv;
  double tail = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760))))));
  return r + std::log(x) - 0.5 * inv - tail;
}

double trigamma(double x) {
  if (!(x > 0)) throw std::domain_error("trigamma: x must be positive");
  double r = 0.0;
  while (x < 10.0) {
    r += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x, inv2 = inv * inv;
  double s = inv + 0.5 * inv2 +
             inv * inv2 * (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * (5.0 / 66)))));
  return r + s;
}

}  // namespace mdn
