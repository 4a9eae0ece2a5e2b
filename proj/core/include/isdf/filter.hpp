#pragma once

/// The prediction/update recursion over an observation series.
///
/// Each step evaluates the one-step-ahead log likelihood at the prediction,
/// computes the implicit or explicit update, and advances through the affine
/// prediction map θ_{t+1|t} = ω + Φ·θ_{t|t}.  Divergence (non-finite values
/// or magnitudes beyond an overflow guard) is flagged and the remaining
/// likelihood contributions are set to a −∞ sentinel.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isdf/common.hpp"
#include "isdf/densities.hpp"
#include "isdf/update.hpp"

namespace isdf {

/// Affine prediction map with a stability/positivity policy.
struct PredictionSpec {
  enum class ConstraintMode { unconstrained, positive_diagonal, convex_combination, identity };

  Vector omega;
  Matrix phi;
  ConstraintMode constraint_mode = ConstraintMode::unconstrained;

  static PredictionSpec unconstrained(Vector omega, Matrix phi);
  /// Diagonal Φ with entries in (0,1), ω > 0 elementwise: maps the positive
  /// orthant to itself.
  static PredictionSpec positive_diagonal(Vector omega, const Vector& phi_diag);
  /// Φ = c·I with c ∈ [0,1).
  static PredictionSpec convex_combination(Vector omega, double c);
  /// ω = 0, Φ = I (random-walk prediction).
  static PredictionSpec identity(int k);

  int dim() const { return static_cast<int>(omega.size()); }
  /// Throws ConfigError when the mode's invariant fails for this domain
  /// (e.g. a convex-combination long-run mean outside the domain).
  void validate(const ParamDomain& domain) const;
  /// ω/(1−Φ); throws SpectralRadiusError when ρ(Φ) ≥ 1.
  Vector unconditional_level() const;
};

/// One prediction step; the result must stay inside the domain
/// (DomainEscape otherwise — a configuration bug).
ParamVector predict(const ParamVector& theta_upd, const PredictionSpec& spec);

enum class FilterMode { isd, esd };

FilterMode filter_mode_from_id(const std::string& id);
std::string filter_mode_id(FilterMode mode);

/// Static configuration of one filter run: how the penalty is produced, how
/// predictions evolve, the density shape, and the initial level.
struct StaticParams {
  PenaltySpec penalty;
  PredictionSpec prediction;
  Vector psi;                   ///< family shape vector (empty → keep model's)
  std::optional<Vector> init;   ///< θ_{0|0}; empty → unconditional level
  std::optional<double> scalar_h;  ///< learning-rate scalar behind the penalty, if any
};

struct StepFlag {
  SolverKind solver = SolverKind::closed_form;
  int iterations = 0;
  bool esd_out_of_domain = false;
  bool solver_error = false;
  std::string message;  ///< nonempty only when solver_error is set
};

struct FilterPath {
  Matrix predictions;      ///< T×K, θ_{t|t-1}
  Matrix updates;          ///< T×K, θ_{t|t}
  Vector loglik_contribs;  ///< T, log p(y_t | θ_{t|t-1})
  std::vector<StepFlag> flags;
  bool diverged = false;
  int first_divergence_index = -1;  ///< −1 when not diverged
  double total_loglik = 0.0;
  Vector final_prediction;  ///< θ_{T+1|T} (NaN-filled after divergence)
};

struct FilterOptions {
  FilterMode mode = FilterMode::isd;
  SolverOptions solver;
  double overflow_guard = 1e12;
  bool fail_fast = false;
  /// Optional T×K additive perturbations applied to every update before the
  /// next prediction (numerical-robustness probes).
  const Matrix* update_perturbations = nullptr;
};

/// Run the full recursion over data (T×obs_dim) with aligned exogenous
/// inputs (T×exo_dim when the model uses them; otherwise empty).
FilterPath run_filter(const DensityModel& model, const Matrix& data, const Matrix& exo,
                      const StaticParams& statics, const FilterOptions& opts = FilterOptions());

/// Per-step Euclidean distance ‖θ_{t|t-1} − θ̃_{t|t-1}‖ between two filter
/// paths started from different initial levels on identical data.
std::vector<double> two_init_probe(const DensityModel& model, const Matrix& data,
                                   const Matrix& exo, const StaticParams& statics,
                                   const Vector& init_a, const Vector& init_b,
                                   const FilterOptions& opts = FilterOptions());

}  // namespace isdf
