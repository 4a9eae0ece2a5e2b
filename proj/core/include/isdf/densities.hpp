#pragma once

/**
 * Catalog of postulated observation densities.
 *
 * Each family exposes the log density, its gradient ("score"), and its
 * Hessian with respect to the time-varying parameter θ, plus concavity
 * metadata used by the update solver and the theory diagnostics.
 *
 * Convention: score and Hessian are the RAW derivatives of log_density in θ.
 * Any rescaling (e.g. the (νσ²)/(ν+1)-scaled Student-t location objective, or
 * information-scaled learning rates) is applied by the caller, never here.
 */

#include <optional>
#include <string>
#include <vector>

#include "isdf/common.hpp"

namespace isdf {

enum class Family {
  poisson_log_intensity,
  negbin_log_intensity,
  exponential_log_intensity,
  gamma_log_scale,
  weibull_log_scale,
  gaussian_log_variance,
  t_log_variance,
  gaussian_correlation,
  t_correlation,
  ged_location,
  t_location,
  gaussian_location,
  gamma_two_param,
  gamma_two_param_exp,
  dirichlet_log_concentration,
  gaussian_regression,
  asymmetric_laplace_quantile,
};

/// Stable string identifiers used by the CLI and config files.
std::string family_id(Family family);
Family family_from_id(const std::string& id);

/**
 * Concavity metadata for one family.
 *
 * - `log_concave`: the log density is concave in θ for every y in support.
 * - `alpha`: certified strong-concavity modulus (0 for merely concave
 *   families; only the synthetic Gaussian-location family has alpha > 0).
 * - `hessian_upper_bound`: global upper bound on the largest Hessian
 *   eigenvalue when one is known and finite; nullopt when unbounded or not
 *   needed (concave families never need it).
 */
struct ConcavityInfo {
  bool log_concave = true;
  double alpha = 0.0;
  std::optional<double> hessian_upper_bound;
};

/**
 * Immutable observation-density model: a family plus its fixed shape
 * parameters ψ.  Safe to share across threads.
 *
 * Shape layouts (ψ):
 *   poisson/exponential/gaussian-vol/gaussian-corr: none
 *   negbin/gamma/weibull: [κ]        t-vol/t-corr: [ν] (ν>2)
 *   ged: [σ, υ]                      t-location: [σ, ν]
 *   gaussian-location: [σ²]          gaussian-regression: [σ²]
 *   quantile: [σ, τ₁..τ_L]           gamma-two-param(+exp)/dirichlet: none
 */
class DensityModel {
 public:
  static DensityModel poisson();
  static DensityModel negbin(double kappa);
  static DensityModel exponential();
  static DensityModel gamma(double kappa);
  static DensityModel weibull(double kappa);
  static DensityModel gaussian_volatility();
  static DensityModel t_volatility(double nu);
  static DensityModel gaussian_correlation();
  static DensityModel t_correlation(double nu);
  static DensityModel ged_location(double sigma, double upsilon);
  static DensityModel t_location(double sigma, double nu);
  static DensityModel gaussian_location(double obs_variance);
  static DensityModel gamma_two_param();
  static DensityModel gamma_two_param_exp();
  static DensityModel dirichlet(int n_components);
  static DensityModel gaussian_regression(int n_regressors, double obs_variance);
  static DensityModel quantiles(std::vector<double> taus, double sigma);

  /// Catalog lookup by string id with default shape parameters.
  static DensityModel from_id(const std::string& id);

  Family family() const { return family_; }
  const Vector& shape() const { return shape_; }
  int param_dim() const { return domain_.dim; }
  int obs_dim() const { return obs_dim_; }
  int exo_dim() const { return exo_dim_; }
  const ParamDomain& domain() const { return domain_; }

  /// Copy of this model with replaced shape parameters (validated).
  DensityModel with_shape(const Vector& psi) const;

  /// Bundle θ with this model's domain, validating interior membership.
  ParamVector param_vector(const Vector& theta) const { return ParamVector(theta, domain_); }

  /// True when the log density is piecewise linear in θ (zero Hessian a.e.).
  bool piecewise_linear() const { return family_ == Family::asymmetric_laplace_quantile; }

  double log_density(const Vector& theta, const Vector& y, const Vector& exo = Vector()) const;
  Vector score(const Vector& theta, const Vector& y, const Vector& exo = Vector()) const;
  Matrix hessian(const Vector& theta, const Vector& y, const Vector& exo = Vector()) const;
  ConcavityInfo concavity_info() const;

  // Scalar fast paths for param_dim == 1 families (y may be multivariate,
  // e.g. the correlation and Dirichlet families).
  double log_density1(double theta, const Vector& y) const;
  double score1(double theta, const Vector& y) const;
  double hessian1(double theta, const Vector& y) const;

 private:
  DensityModel(Family family, Vector shape, int obs_dim, int exo_dim, ParamDomain domain);

  void check_shape() const;
  void check_obs(const Vector& y) const;
  void check_exo(const Vector& exo) const;

  Family family_;
  Vector shape_;
  int obs_dim_;
  int exo_dim_;
  ParamDomain domain_;
};

}  // namespace isdf
