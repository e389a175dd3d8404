#include "mmm/rng.hpp"

#include <cmath>
#include <numbers>

#include "mmm/errors.hpp"

namespace mmm {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& ctr,
                         const std::array<std::uint32_t, 2>& key) {
  const std::uint64_t p0 = std::uint64_t(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = std::uint64_t(kPhiloxM1) * ctr[2];
  const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
  const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 2>& key,
                                        const std::array<std::uint32_t, 4>& counter) {
  std::array<std::uint32_t, 4> ctr = counter;
  std::array<std::uint32_t, 2> k = key;
  for (int round = 0; round < 10; ++round) {
    philox_round(ctr, k);
    k[0] += kPhiloxW0;
    k[1] += kPhiloxW1;
  }
  return ctr;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t domain, std::uint64_t unit)
    : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
      base_{0,
            std::uint32_t(unit),
            std::uint32_t(domain),
            std::uint32_t(domain >> 32)} {
  if (unit >> 32) {
    throw ValidationError("RngStream unit index exceeds 32 bits");
  }
}

std::uint32_t RngStream::next_u32() {
  if (buffered_u32_ == 0) {
    std::array<std::uint32_t, 4> ctr = base_;
    ctr[0] = block_++;
    buffer_ = philox4x32(key_, ctr);
    buffered_u32_ = 4;
  }
  return buffer_[4 - buffered_u32_--];
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t hi = next_u32();
  const std::uint64_t lo = next_u32();
  return (hi << 32) | lo;
}

double RngStream::uniform() {
  // 53-bit mantissa, shifted off zero so the result lies strictly in (0,1).
  return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

double RngStream::exponential(double rate) {
  return -std::log(uniform()) / rate;
}

double RngStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw ValidationError("gamma draw requires positive shape and scale");
  }
  if (shape < 1.0) {
    const double boost = std::pow(uniform(), 1.0 / shape);
    return gamma(shape + 1.0, scale) * boost;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
  }
}

double RngStream::chi_squared(double df) { return gamma(0.5 * df, 2.0); }

double RngStream::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

void RngStream::dirichlet(std::span<const double> alpha, std::span<double> out) {
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = gamma(alpha[i]);
    total += out[i];
  }
  if (total <= 0.0) {
    throw NumericError("dirichlet draw underflowed to zero mass");
  }
  for (std::size_t i = 0; i < alpha.size(); ++i) out[i] /= total;
}

Eigen::VectorXd RngStream::dirichlet(const Eigen::VectorXd& alpha) {
  Eigen::VectorXd out(alpha.size());
  dirichlet(std::span<const double>(alpha.data(), std::size_t(alpha.size())),
            std::span<double>(out.data(), std::size_t(out.size())));
  return out;
}

int RngStream::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    throw NumericError("categorical draw over all-zero weights");
  }
  double target = uniform() * total;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    target -= weights[i];
    if (target <= 0.0) return int(i);
  }
  return int(weights.size()) - 1;
}

Eigen::VectorXd RngStream::normal_vector(const Eigen::VectorXd& mean,
                                         const Eigen::MatrixXd& chol_lower) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal();
  return mean + chol_lower * z;
}

}  // namespace mmm
