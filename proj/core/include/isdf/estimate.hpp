#pragma once

/// Maximum-likelihood estimation of the static hyper-parameters by the
/// prediction-error decomposition: minimize −(1/T)·Σ log p(y_t|θ_{t|t-1})
/// over an unconstrained reparameterization that keeps every iterate stable
/// (spectral radius of Φ below one, SPD penalties, valid shape parameters).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "isdf/common.hpp"
#include "isdf/densities.hpp"
#include "isdf/filter.hpp"
#include "isdf/update.hpp"

namespace isdf {

/// How the penalty block of ξ is parameterized.
enum class PenaltyKind {
  scalar_h,     ///< one learning-rate scalar H; penalty = I/(H·m) with m the
                ///< family's score-scaling factor
  info_scaled,  ///< one scale h of the per-step rule P_t = exp(θ_pred/2)/h
  lyapunov,     ///< Δ via log-Cholesky, P solved from P − Φ'PΦ = Δ
  static_full   ///< P itself via log-Cholesky
};

PenaltyKind penalty_kind_from_id(const std::string& id);
std::string penalty_kind_id(PenaltyKind kind);

struct FitConfig {
  FilterMode mode = FilterMode::isd;
  PenaltyKind penalty_kind = PenaltyKind::scalar_h;
  PredictionSpec::ConstraintMode constraint_mode =
      PredictionSpec::ConstraintMode::unconstrained;
  std::optional<ScalingSpec> scaling;  ///< empty → ScalingSpec::default_for(model)

  int starts = 5;            ///< 1 default + (starts−1) jittered
  int max_iters = 500;
  double fd_step = 1e-6;     ///< relative central-difference step
  double tolerance = 1e-9;   ///< stop when the objective change drops below
  double jitter = 0.5;       ///< uniform jitter half-width per coordinate
  std::uint64_t seed = 1;    ///< jitter randomness
  double divergence_penalty = 1e10;
  double overflow_guard = 1e12;
  SolverOptions solver;

  /// Pins exclude a block from ξ and hold it at the given value.
  std::optional<Vector> pin_omega;
  std::optional<double> pin_phi;  ///< common diagonal value
  std::optional<double> pin_h;    ///< scalar_h / info_scaled kinds only
  std::vector<std::pair<int, double>> pin_psi;  ///< (shape index, value)
  bool estimate_psi = true;  ///< estimate non-pinned shape entries
  bool estimate_init = false;
  std::optional<Vector> init_theta;  ///< pin θ_{0|0}
  std::optional<Vector> start;       ///< explicit default start (unconstrained coords)
};

/// Bijection between the unconstrained optimizer coordinates and
/// StaticParams, with the blocks [penalty | omega | phi | psi | init].
class Transform {
 public:
  Transform(const DensityModel& model, const FitConfig& config);

  int dim() const { return dim_; }
  const std::vector<std::string>& names() const { return names_; }

  StaticParams forward(const Vector& z) const;
  Vector inverse(const StaticParams& params) const;

  /// Constrained-space values for reporting, keyed by names().
  std::map<std::string, double> named_values(const StaticParams& params) const;

 private:
  DensityModel model_;
  FitConfig config_;
  ScalingSpec scaling_;
  int k_ = 1;
  int n_penalty_ = 0, n_omega_ = 0, n_phi_ = 0, n_init_ = 0;
  std::vector<int> psi_indices_;  ///< estimated shape entries, in order
  int dim_ = 0;
  std::vector<std::string> names_;
};

Transform default_transform(const DensityModel& model, const FitConfig& config);

/// −(1/T)·Σ log p(y_t|θ_{t|t-1}) under forward-transformed ξ; any divergence
/// or transform failure returns the finite divergence penalty (default 1e10).
double neg_avg_loglik(const Vector& xi_unconstrained, const DensityModel& model,
                      const Matrix& data, const Matrix& exo, const FitConfig& config);

struct StartResult {
  Vector z_start;
  Vector z_end;
  double f_start = 0.0;
  double f_end = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string note;
};

struct FitReport {
  std::vector<StartResult> starts;
  int best_start = -1;
  std::vector<std::string> names;
  Vector z_hat;
  std::map<std::string, double> estimates;  ///< constrained-space values
  double objective = 0.0;                   ///< neg average loglik at ξ̂
  double total_loglik = 0.0;                ///< T·(−objective)
  int function_evals = 0;
  bool converged = false;
};

/// Multi-start quasi-Newton fit with central-difference gradients.
/// Throws ConfigError for T < 50 and AllStartsFailed when no start reaches a
/// finite objective.
std::pair<StaticParams, FitReport> fit(const DensityModel& model, const Matrix& data,
                                       const Matrix& exo, const FitConfig& config);

}  // namespace isdf
