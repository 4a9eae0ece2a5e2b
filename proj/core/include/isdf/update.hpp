#pragma once

/// Per-observation updates of the time-varying parameter.
///
/// The implicit update maximizes the penalized objective
///     f(θ) = log p(y|θ) − ½·(θ − θ_pred)' P (θ − θ_pred)
/// over the parameter domain; the explicit update takes one gradient step
///     θ_pred + H·∇log p(y|θ_pred)
/// with learning-rate matrix H.  Closed forms exist for linear regression,
/// quantile batteries, and the Student-t location model; everything else is
/// solved by safeguarded Newton iteration (with multi-start stationary-point
/// comparison for families whose log density is not concave in θ).

#include <optional>
#include <utility>
#include <vector>

#include "isdf/common.hpp"
#include "isdf/densities.hpp"

namespace isdf {

/// Solve P = Φ' P Φ + Δ for P (requires spectral radius of Φ below one;
/// throws SpectralRadiusError otherwise).  Direct Kronecker solve for small
/// K, doubling series with relative tolerance 1e-14 for larger K.
Matrix lyapunov_solve(const Matrix& phi, const Matrix& delta);

/// Score-scaling convention applied on top of the raw family score.
/// Families expose raw ∂logp/∂θ; some model parameterizations are stated in
/// a scaled convention instead (the Student-t location model divides the raw
/// score by (ν+1)/(νσ²), turning it into (y−θ)/(1+(y−θ)²/(νσ²))).
struct ScalingSpec {
  enum class Kind { raw, t_location_scaled };
  Kind kind = Kind::raw;

  static ScalingSpec raw() { return ScalingSpec{Kind::raw}; }
  static ScalingSpec t_location_scaled() { return ScalingSpec{Kind::t_location_scaled}; }
  /// The convention a family's learning rate is conventionally quoted in:
  /// t-location → scaled, everything else → raw.
  static ScalingSpec default_for(const DensityModel& model);

  /// Multiplier m with scaled_score = m · raw_score (constant per model).
  double factor(const DensityModel& model) const;
};

/// The family score under a scaling convention.
Vector scaled_score(const DensityModel& model, const Vector& theta, const Vector& y,
                    const ScalingSpec& scaling, const Vector& exo = Vector());

/// How the per-step penalty matrix P_t is produced.
struct PenaltySpec {
  enum class Kind { static_matrix, lyapunov, info_scaled };

  Kind kind = Kind::static_matrix;
  Matrix P;      ///< resolved penalty for the two static kinds
  Matrix delta;  ///< Lyapunov inputs, kept for introspection
  Matrix phi;
  double h = 0.0;  ///< info-scaled learning-rate scale

  /// Fixed SPD penalty matrix (symmetrized; min eigenvalue must be positive).
  static PenaltySpec static_matrix(const Matrix& P);
  /// Convenience: 1×1 fixed penalty.
  static PenaltySpec static_scalar(double p);
  /// P solving P − Φ'PΦ = Δ (Δ SPD, spectral radius of Φ below one).
  static PenaltySpec lyapunov(const Matrix& delta, const Matrix& phi);
  /// Per-step scalar penalty P_t = exp(θ_pred/2)/h — the information-scaled
  /// learning rate H_t = h·exp(−θ_pred/2) of the Poisson count design.
  static PenaltySpec info_scaled(double h);

  bool per_step() const { return kind == Kind::info_scaled; }
  int dim() const { return per_step() ? 1 : static_cast<int>(P.rows()); }

  /// The penalty matrix for one step, given the current prediction.
  Matrix resolve(const Vector& theta_pred) const;
};

/// Stopping rules and search limits for the generic solver.
struct SolverOptions {
  double foc_tol = 1e-10;     ///< absolute, scaled by 1 + ‖P·θ_pred‖
  int max_newton_iters = 100;
  int max_bisect_iters = 200;
  bool multistart = true;     ///< global-search mode for non-concave families
  int quadrature_nodes = 32;  ///< Gauss–Legendre nodes for average Hessians
};

enum class SolverKind { closed_form, bisection, newton_linesearch, projected_newton };

std::string solver_kind_id(SolverKind kind);

struct UpdateResult {
  ParamVector theta_upd;
  double objective_gain = 0.0;  ///< f at update minus f at prediction
  double loglik_gain = 0.0;     ///< log p at update minus log p at prediction
  int iterations = 0;
  SolverKind solver = SolverKind::closed_form;
  /// Stationary points examined in multi-root cases: (θ, penalized objective).
  std::vector<std::pair<Vector, double>> stationary_points;
};

struct EsdResult {
  Vector theta_upd;  ///< raw result; may lie outside the domain
  bool out_of_domain = false;
};

/// Implicit update: maximize f(θ) = log p(y|θ) − ½‖θ−θ_pred‖²_P over the
/// interior of the parameter domain.  The returned point is a stationary
/// point with FOC residual ‖∇logp(θ) − P(θ−θ_pred)‖ ≤ foc_tol·(1+‖Pθ_pred‖)
/// achieving the best objective among the stationary points found.
/// Errors: NoInteriorSolution, MaxIterations, NonConcaveUnresolved.
UpdateResult isd_update(const DensityModel& model, const Vector& y,
                        const ParamVector& theta_pred, const PenaltySpec& penalty,
                        const Vector& exo = Vector(),
                        const SolverOptions& opts = SolverOptions());

/// Explicit update: θ_pred + H·(scaled) score at the prediction, exactly one
/// matrix–vector product.  Results outside the domain are returned as-is and
/// flagged, never clipped.
EsdResult esd_update(const DensityModel& model, const Vector& y,
                     const ParamVector& theta_pred, const Matrix& learning_rate,
                     const Vector& exo = Vector(),
                     const ScalingSpec& scaling = ScalingSpec());

/// Closed-form implicit update for Gaussian linear regression:
/// β_pred + σ²/(σ² + x'Hx) · H x (y − β_pred'x)/σ².
Vector isd_update_regression(double y, const Vector& x, const Vector& beta_pred,
                             const Matrix& H, double sigma2);

/// Closed-form implicit update for a battery of quantile levels sharing one
/// learning rate H and scale σ: per level, min{y, q+Hτ/σ} when y > q and
/// max{y, q−H(1−τ)/σ} when y ≤ q.  Output never crosses.
/// Throws CrossedPredictions when q_pred is not strictly increasing.
Vector isd_update_quantile(double y, const Vector& q_pred, const Vector& taus,
                           double H, double sigma);

/// Closed-form implicit update for the Student-t location model in the
/// scaled convention: θ_upd = (1−w)θ_pred + w·y, with w the root of
/// (e²/(νσ²))(1−w)²w + w − H(1−w) = 0 in (0, H/(1+H)] that maximizes the
/// scaled penalized objective (penalty (ν+1)/(νσ²H)).
UpdateResult isd_update_t_location(double y, double theta_pred, double H,
                                   double sigma, double nu);

/// Average negative Hessian of log p along the segment [theta_a, theta_b],
/// by n-node Gauss–Legendre quadrature.
Matrix compute_average_hessian(const DensityModel& model, const Vector& y,
                               const ParamVector& theta_a, const ParamVector& theta_b,
                               int n_nodes = 32, const Vector& exo = Vector());

}  // namespace isdf
