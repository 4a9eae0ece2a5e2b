#pragma once

/**
 * Deterministic random number generation.
 *
 * The standard library's distribution objects are implementation-defined, so
 * simulated series would differ across standard libraries.  Replication
 * studies need bit-identical streams everywhere, hence a fixed xoshiro256++
 * engine with hand-rolled samplers.  Substreams are derived by hashing
 * (master seed, stream index), which keeps replications independent and
 * reproducible regardless of scheduling order.
 */

#include <array>
#include <cmath>
#include <cstdint>

#include <boost/math/special_functions/gamma.hpp>

#include "isdf/common.hpp"

namespace isdf {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic 64-bit seed for (master seed, stream index) pairs, for
/// spawning named child seeds (per-replication DGPs, jitter streams).
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t x = master ^ (index * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  return detail::splitmix64(x);
}

/// xoshiro256++ engine (Blackman & Vigna), seeded through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& si : s_) si = detail::splitmix64(x);
  }

  /// Independent substream for (master seed, stream index).
  static Rng substream(std::uint64_t master, std::uint64_t index) {
    std::uint64_t x = master;
    const std::uint64_t a = detail::splitmix64(x);
    x ^= index + 0x632BE59BD9B4E019ULL;
    const std::uint64_t b = detail::splitmix64(x);
    return Rng(a ^ (b * 0xD2B74407B1CE6E93ULL + index));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1) — never exactly zero (safe for logs).
  double uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via the Marsaglia polar method (caches the spare draw).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double exponential(double rate) { return -std::log(uniform_open01()) / rate; }

  /// Gamma(shape, scale=1) via Marsaglia–Tsang, with the boost for shape < 1.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform_open01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
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
      const double u = uniform_open01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double gamma(double shape, double scale) { return gamma(shape) * scale; }

  double chi_squared(double dof) { return gamma(0.5 * dof, 2.0); }

  /// Poisson via sequential inversion (small mean) or PTRS rejection.
  long poisson(double mean) {
    if (!(mean >= 0.0)) throw ConfigError("Rng::poisson(): mean must be nonnegative");
    if (mean == 0.0) return 0;
    if (mean < 10.0) {
      // Knuth-style product-of-uniforms in log space for robustness.
      const double l = std::exp(-mean);
      long k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= uniform_open01();
      } while (p > l);
      return k - 1;
    }
    return poisson_ptrs(mean);
  }

  /// Negative binomial (dispersion kappa, mean lambda) via Gamma–Poisson mixture.
  long negative_binomial(double kappa, double lambda) {
    return poisson(gamma(kappa, lambda / kappa));
  }

  double weibull(double scale, double shape) {
    return scale * std::pow(-std::log(uniform_open01()), 1.0 / shape);
  }

  /// Student-t with `dof` degrees of freedom (unit scale, not unit variance).
  double student_t(double dof) {
    return normal() / std::sqrt(chi_squared(dof) / dof);
  }

  /// Student-t standardized to unit variance (requires dof > 2).
  double student_t_unit_variance(double dof) {
    return normal() * std::sqrt((dof - 2.0) / chi_squared(dof));
  }

  double cauchy(double scale) {
    return scale * std::tan(M_PI * (uniform01() - 0.5));
  }

  /**
   * Generalized error distribution draw centered at zero:
   * |y/σ|^υ ~ Gamma(1/υ, 1) with a random sign.
   */
  double ged(double sigma, double upsilon) {
    const double g = gamma(1.0 / upsilon, 1.0);
    const double mag = sigma * std::pow(g, 1.0 / upsilon);
    return (next_u64() & 1ULL) ? mag : -mag;
  }

  /// Symmetric Dirichlet draw with common concentration, via normalized Gammas.
  Vector dirichlet(double concentration, int n) {
    Vector y(n);
    for (;;) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        y[i] = gamma(concentration);
        sum += y[i];
      }
      if (sum > 0.0) {
        y /= sum;
        bool interior = true;
        for (int i = 0; i < n; ++i) interior = interior && y[i] > 0.0;
        // Renormalize once more so the sum is exact to machine precision.
        y /= y.sum();
        if (interior) return y;
      }
      // Extremely small concentrations can underflow every component; redraw.
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  /// PTRS transformed-rejection Poisson sampler (Hörmann 1993).
  long poisson_ptrs(double mean) {
    const double log_mean = std::log(mean);
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform01() - 0.5;
      const double v = uniform01();
      const double us = 0.5 - std::abs(u);
      const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<long>(k);
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          k * log_mean - mean - boost::math::lgamma(k + 1.0)) {
        return static_cast<long>(k);
      }
    }
  }

  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace isdf
