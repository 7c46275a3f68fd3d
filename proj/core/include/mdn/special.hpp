#pragma once

namespace mdn {

// Log-gamma, digamma and trigamma for x > 0. Recurrence below the asymptotic
// threshold, then a Bernoulli-series tail. Throws std::domain_error on x <= 0.
double lgamma_pos(double x);
double digamma(double x);
double trigamma(double x);

}  // namespace mdn
