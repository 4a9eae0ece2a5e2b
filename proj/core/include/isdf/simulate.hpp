#pragma once

/// Data-generating processes and the Monte-Carlo replication harness:
/// filter-as-DGP series, AR(1) state-space designs (optionally fat-tailed),
/// the two-parameter Gamma square wave, and the Dirichlet concentration
/// process — plus per-replication fit/filter studies with MSE, divergence,
/// and RMSE aggregates.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isdf/common.hpp"
#include "isdf/densities.hpp"
#include "isdf/estimate.hpp"
#include "isdf/filter.hpp"
#include "isdf/rng.hpp"

namespace isdf {

struct DgpSpec {
  enum class Kind { isd_dgp, ar1_state, square_wave_gamma, dirichlet_ar1 };
  enum class Innovation { gaussian, student_t };

  Kind kind = Kind::ar1_state;
  int T = 1000;
  std::uint64_t seed = 1;

  /// Filter-as-DGP statics (isd_dgp kind).
  StaticParams xi0;

  /// Scalar AR(1) state θ⁰_t = ω⁰ + Φ⁰·θ⁰_{t-1} + σ_η·η_t  with unit-variance
  /// innovations (ar1_state and dirichlet_ar1 kinds).
  double omega0 = 0.0;
  double phi0 = 0.98;
  double sigma_eta = 0.15;
  Innovation innovation = Innovation::gaussian;
  double nu0 = 5.0;   ///< Student-t innovation dof
  int burn_in = 0;

  static DgpSpec isd(StaticParams xi0, int T, std::uint64_t seed);
  static DgpSpec ar1(double omega0, double phi0, double sigma_eta, int T, std::uint64_t seed,
                     Innovation innovation = Innovation::gaussian, double nu0 = 5.0);
  /// a_t = 2 + sign(sin(2πt/400)), b_t = 8 + 3·sign(cos(2πt/1000)).
  static DgpSpec square_wave(int T, std::uint64_t seed);
  /// ω⁰=0.1, Φ⁰=0.95, σ_η²=0.195 (mean and variance of θ⁰ both 2), burn-in 100.
  static DgpSpec dirichlet_ar1(int T, std::uint64_t seed,
                               Innovation innovation = Innovation::gaussian, double nu0 = 5.0);

  void validate(const DensityModel& model) const;
};

struct SimulationResult {
  Matrix y;       ///< T×obs_dim observations
  Matrix theta0;  ///< T×K true (or DGP-prediction) states
};

/// Draw one observation y ~ p(·|θ) for the model's family.
Vector draw_observation(const DensityModel& model, const Vector& theta, Rng& rng);

/// Generate a series under the spec; reproducible given the seed.
SimulationResult simulate(const DensityModel& model, const DgpSpec& spec);

/// One fit/filter configuration evaluated inside a replication study.
struct StudyArm {
  /// Maps the DGP state into this arm's parameterization before MSE.
  enum class StateMap { identity, log };

  std::string label;
  DensityModel model;
  FitConfig fit;
  StateMap state_map = StateMap::identity;

  StudyArm(std::string label_, DensityModel model_, FitConfig fit_,
           StateMap map_ = StateMap::identity)
      : label(std::move(label_)), model(std::move(model_)), fit(std::move(fit_)),
        state_map(map_) {}
};

struct ArmResult {
  double in_mse = kInfinity;
  double out_mse = kInfinity;
  bool diverged = false;     ///< filter path flagged divergence anywhere
  bool fit_failed = false;
  double total_loglik = 0.0;
  std::map<std::string, double> xi_hat;
  std::string note;
};

struct ReplicationRow {
  int rep = 0;
  std::uint64_t seed = 0;
  std::vector<ArmResult> arms;
};

struct ArmAggregate {
  std::string label;
  int n_rows = 0;
  int n_fit_failures = 0;
  double mean_in_mse = kInfinity;      ///< ∞ when any row is ∞
  double mean_out_mse = kInfinity;
  double mean_in_mse_finite = kInfinity;   ///< over finite rows only
  double mean_out_mse_finite = kInfinity;
  double median_in_mse = kInfinity;
  double median_out_mse = kInfinity;
  double divergence_fraction_in = 0.0;   ///< fraction of rows with ∞ in-range
  double divergence_fraction_out = 0.0;
  std::map<std::string, double> rmse;  ///< per static parameter vs true values
};

struct ReplicationReport {
  std::vector<std::string> arm_labels;
  std::vector<ReplicationRow> rows;
  std::vector<ArmAggregate> aggregates;
  int split_R = 0;
  std::uint64_t master_seed = 0;
  std::map<std::string, double> true_values;
};

struct StudyOptions {
  int threads = 1;
  std::map<std::string, double> true_values;  ///< for per-parameter RMSEs
  FilterOptions filter;                       ///< mode overridden per arm
};

/// Mean squared componentwise error of predictions vs the true state over
/// t < split_R (in-sample) and t ≥ split_R (out-of-sample); a range touching
/// any non-finite prediction yields the infinite sentinel.
std::pair<double, double> mse(const Matrix& predictions, const Matrix& theta0, int split_R);

/// Aggregates recomputed from rows (the report builder uses exactly this).
std::vector<ArmAggregate> compute_aggregates(const std::vector<std::string>& labels,
                                             const std::vector<ReplicationRow>& rows,
                                             const std::map<std::string, double>& true_values);

/// For each replication: simulate, fit each arm's statics on the first
/// split_R observations, filter the full series, and score predictions
/// against the DGP state.  Per-replication failures are flagged rows; the
/// study itself never aborts.
ReplicationReport run_replication_study(const DensityModel& dgp_model, const DgpSpec& dgp,
                                        const std::vector<StudyArm>& arms, int n_reps,
                                        int split_R, const StudyOptions& opts = StudyOptions());

}  // namespace isdf
