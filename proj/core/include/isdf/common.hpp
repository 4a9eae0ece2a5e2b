#pragma once

/**
 * Shared vector/matrix aliases, parameter domains, and the error taxonomy
 * used across the filtering library.
 */

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace isdf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Error taxonomy.  Everything the library throws derives from Error, so a
// single catch clause can intercept all library failures.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ISDF_DECLARE_ERROR(NAME)  \
  class NAME : public Error {     \
   public:                        \
    using Error::Error;           \
  }

/// Parameter vector outside (or on the boundary of) its domain.
ISDF_DECLARE_ERROR(DomainError);
/// Observation outside the family's support.
ISDF_DECLARE_ERROR(SupportError);
/// Invalid fixed shape parameter or dimension mismatch.
ISDF_DECLARE_ERROR(ShapeError);
/// Score or Hessian requested at a kink of the log density.
ISDF_DECLARE_ERROR(NonDifferentiableError);
/// Update solver was driven to the boundary of an open parameter domain.
ISDF_DECLARE_ERROR(NoInteriorSolution);
/// Iteration caps exhausted before the first-order-condition tolerance.
ISDF_DECLARE_ERROR(MaxIterations);
/// Multi-start search found no stationary point of a non-concave objective.
ISDF_DECLARE_ERROR(NonConcaveUnresolved);
/// Simultaneous quantile predictions not ordered across levels.
ISDF_DECLARE_ERROR(CrossedPredictions);
/// A prediction left the parameter domain despite its constraint mode.
ISDF_DECLARE_ERROR(DomainEscape);
/// Autoregressive matrix has spectral radius at or above one.
ISDF_DECLARE_ERROR(SpectralRadiusError);
/// Requested contraction coefficient is not non-expansive (exceeds one).
ISDF_DECLARE_ERROR(NotNonExpansive);
/// Every optimizer start failed to produce a usable estimate.
ISDF_DECLARE_ERROR(AllStartsFailed);
/// Series or vector length disagreement.
ISDF_DECLARE_ERROR(LengthMismatch);
/// Invalid, inconsistent, or unknown configuration.
ISDF_DECLARE_ERROR(ConfigError);
/// File read/write failure.
ISDF_DECLARE_ERROR(IoError);

#undef ISDF_DECLARE_ERROR

// ---------------------------------------------------------------------------
// Parameter domains.
// ---------------------------------------------------------------------------

enum class DomainKind { unconstrained, positive, box };

/**
 * Convex parameter domain for the time-varying parameter vector.
 * Membership is tested against the *interior*: boundary points are rejected,
 * because every update must remain strictly inside an open domain.
 */
struct ParamDomain {
  DomainKind kind = DomainKind::unconstrained;
  int dim = 1;
  double lower = 0.0;  ///< box only
  double upper = 0.0;  ///< box only

  static ParamDomain unconstrained(int dim) { return {DomainKind::unconstrained, dim, 0.0, 0.0}; }
  static ParamDomain positive(int dim) { return {DomainKind::positive, dim, 0.0, 0.0}; }
  static ParamDomain box(int dim, double lower, double upper) {
    if (!(lower < upper)) throw ShapeError("ParamDomain::box(): lower must be < upper");
    return {DomainKind::box, dim, lower, upper};
  }

  /// True when every component is finite and strictly inside the domain.
  bool contains(const Vector& theta) const {
    if (theta.size() != dim) return false;
    for (int i = 0; i < theta.size(); ++i) {
      const double v = theta[i];
      if (!std::isfinite(v)) return false;
      switch (kind) {
        case DomainKind::unconstrained: break;
        case DomainKind::positive:
          if (!(v > 0.0)) return false;
          break;
        case DomainKind::box:
          if (!(v > lower && v < upper)) return false;
          break;
      }
    }
    return true;
  }

  /**
   * Largest step multiple f such that `from + f * step` is still on or inside
   * the closed domain boundary; +infinity when the ray never exits.  Callers
   * shrink the result (e.g. by 0.9) to stay interior.
   */
  double max_step_fraction(const Vector& from, const Vector& step) const {
    double f = kInfinity;
    for (int i = 0; i < dim; ++i) {
      double lo = -kInfinity, hi = kInfinity;
      if (kind == DomainKind::positive) {
        lo = 0.0;
      } else if (kind == DomainKind::box) {
        lo = lower;
        hi = upper;
      }
      if (step[i] > 0.0 && std::isfinite(hi)) f = std::min(f, (hi - from[i]) / step[i]);
      if (step[i] < 0.0 && std::isfinite(lo)) f = std::min(f, (lo - from[i]) / step[i]);
    }
    return f;
  }
};

/// A parameter vector bundled with (and validated against) its domain.
struct ParamVector {
  Vector values;
  ParamDomain domain;

  ParamVector() = default;
  ParamVector(Vector v, ParamDomain d) : values(std::move(v)), domain(d) {
    if (!domain.contains(values)) {
      throw DomainError("ParamVector(): values outside the interior of the domain");
    }
  }
};

}  // namespace isdf
