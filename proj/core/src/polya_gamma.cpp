#include "mmm/polya_gamma.hpp"

#include <cmath>
#include <numbers>

#include "mmm/errors.hpp"

namespace mmm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = kPgSeriesCrossover;
constexpr double kTruncRecip = 1.0 / kTrunc;

// Piecewise series coefficient a_n(x) of the Jacobi-type density.
double series_coef(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) {
    return k * std::exp(-0.5 * k * k * x);
  }
  if (x > 0.0) {
    const double expnt =
        -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x;
    return std::exp(expnt);
  }
  return 0.0;
}

// Probability that the proposal draws from the truncated-exponential branch.
double mass_texpon(double z) {
  const double t = kTrunc;
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);

  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + log_norm_cdf(b);
  const double xa = x0 + z + log_norm_cdf(a);
  const double qdivp = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + qdivp);
}

// Inverse-Gaussian(1/z, 1) truncated to (0, kTrunc].
double rtigauss(double z, RngStream& rng) {
  z = std::fabs(z);
  const double t = kTrunc;
  double x = t + 1.0;
  if (kTruncRecip > z) {  // mean 1/z lies right of the truncation point
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / t) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * t;
      x = t / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > t) {
      double y = rng.normal();
      y *= y;
      const double half_mu = 0.5 * mu;
      const double mu_y = mu * y;
      x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

// One exact PG(1, c) draw; returns J*(1, |c|/2) / 4.
double pg1_draw(double c, RngStream& rng) {
  const double z = std::fabs(c) * 0.5;
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;

  for (;;) {
    double x;
    if (rng.uniform() < mass_texpon(z)) {
      x = kTrunc + rng.exponential() / fz;
    } else {
      x = rtigauss(z, rng);
    }

    double partial = series_coef(0, x);
    const double y = rng.uniform() * partial;
    int n = 0;
    for (;;) {
      ++n;
      if (n % 2 == 1) {
        partial -= series_coef(n, x);
        if (y <= partial) return 0.25 * x;
      } else {
        partial += series_coef(n, x);
        if (y > partial) break;
      }
    }
  }
}

}  // namespace

double log_norm_cdf(double x) {
  if (x > -8.0) {
    return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  }
  // Asymptotic left-tail expansion of log Phi(x).
  const double x2 = x * x;
  const double log_phi = -0.5 * x2 - 0.5 * std::log(2.0 * kPi);
  return log_phi - std::log(-x) + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

double pg_sample(const PgParams& params, RngStream& rng) {
  if (params.b < 1) throw ValidationError("PG shape b must be a positive integer");
  if (!std::isfinite(params.c)) throw ValidationError("PG tilt c must be finite");
  double total = 0.0;
  for (int i = 0; i < params.b; ++i) total += pg1_draw(params.c, rng);
  return total;
}

double pg_sample(int b, double c, RngStream& rng) { return pg_sample(PgParams{b, c}, rng); }

double pg_mean(int b, double c) {
  const double z = std::fabs(c);
  if (z < 1e-8) return b * 0.25;
  return b / (2.0 * c) * std::tanh(c / 2.0);
}

double pg_variance(int b, double c) {
  const double z = std::fabs(c);
  if (z < 1e-6) return b / 24.0;
  const double sech = 1.0 / std::cosh(z / 2.0);
  return b * (std::sinh(z) - z) * sech * sech / (4.0 * z * z * z);
}

}  // namespace mmm
