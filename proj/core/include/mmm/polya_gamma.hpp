#ifndef MMM_POLYA_GAMMA_HPP
#define MMM_POLYA_GAMMA_HPP

#include "mmm/rng.hpp"

namespace mmm {

struct PgParams {
  int b = 1;      // positive integer shape
  double c = 0.0; // tilting parameter, must be finite
};

/// Crossover point between the two series bounds used by the acceptance test.
/// Any value in the region where both bounds are valid works; 0.64 is the
/// conventional choice.
inline constexpr double kPgSeriesCrossover = 0.64;

/// Exact draw from PG(b, c). PG(1, c) uses the alternating-series rejection
/// sampler on the exponential / inverse-Gaussian mixture proposal; integer
/// b >= 1 sums b independent PG(1, c) draws.
double pg_sample(const PgParams& params, RngStream& rng);
double pg_sample(int b, double c, RngStream& rng);

/// E[PG(b,c)] = (b/2c) tanh(c/2), with the c -> 0 limit b/4.
double pg_mean(int b, double c);

/// Var[PG(b,c)] = b (sinh(c) - c) sech^2(c/2) / (4 c^3), limit b/24 at c = 0.
double pg_variance(int b, double c);

/// log of the standard normal CDF, stable in the far left tail.
double log_norm_cdf(double x);

}  // namespace mmm

#endif  // MMM_POLYA_GAMMA_HPP
