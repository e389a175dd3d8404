#ifndef MMM_RNG_HPP
#define MMM_RNG_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace mmm {

/// Philox4x32-10 counter-based generator block function.
///
/// Counter-based streams let every random draw be addressed by
/// (seed, domain, unit, block index), which is what makes chain resumption
/// and per-subject substreams reproducible regardless of execution order.
std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 2>& key,
                                        const std::array<std::uint32_t, 4>& counter);

/// One sequential random stream, addressed by (seed, domain, unit).
///
/// A stream consumes Philox blocks with an incrementing block index; distinct
/// (domain, unit) pairs under the same seed give statistically independent
/// streams. Domains encode (sweep, step) in the samplers.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t domain, std::uint64_t unit = 0);

  std::uint64_t next_u64();

  /// Uniform on the open interval (0,1).
  double uniform();

  /// Standard normal via Box-Muller; the spare deviate is cached.
  double normal();

  /// Exponential with the given rate.
  double exponential(double rate = 1.0);

  /// Gamma(shape, scale) via Marsaglia-Tsang, boosted for shape < 1.
  double gamma(double shape, double scale = 1.0);

  double chi_squared(double df);

  double beta(double a, double b);

  /// Fills `out` with a Dirichlet(alpha) draw; out.size() == alpha.size().
  void dirichlet(std::span<const double> alpha, std::span<double> out);

  Eigen::VectorXd dirichlet(const Eigen::VectorXd& alpha);

  /// Index draw proportional to non-negative weights (need not sum to 1).
  int categorical(std::span<const double> weights);

  /// Draw from N(mean, cov) given the lower Cholesky factor of cov.
  Eigen::VectorXd normal_vector(const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& chol_lower);

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> base_;
  std::uint32_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_u32_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;

  std::uint32_t next_u32();
};

}  // namespace mmm

#endif  // MMM_RNG_HPP
