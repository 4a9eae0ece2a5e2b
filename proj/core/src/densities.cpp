#include "isdf/densities.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace isdf {

namespace {

using boost::math::digamma;
using boost::math::lgamma;
using boost::math::trigamma;

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;  // log(2π)
constexpr double kCountTol = 1e-9;    // integer-support tolerance for counts
constexpr double kSimplexTol = 1e-10; // Dirichlet sum-to-one tolerance

double require_count(double y, const char* who) {
  if (!(y >= 0.0) || std::abs(y - std::round(y)) > kCountTol) {
    throw SupportError(std::string(who) + ": observation must be a nonnegative integer");
  }
  return std::round(y);
}

void require_positive_obs(double y, const char* who) {
  if (!(y > 0.0)) throw SupportError(std::string(who) + ": observation must be positive");
}

void require_finite_obs(const Vector& y, const char* who) {
  for (int i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw SupportError(std::string(who) + ": observation must be finite");
  }
}

/// Correlation link ρ = (1−e^{−θ})/(1+e^{−θ}) = tanh(θ/2) with a
/// cancellation-free 1−ρ² = 4u/(1+u)², u = e^{−|θ|}.
struct CorrLink {
  double rho;
  double one_minus_rho2;
  explicit CorrLink(double theta) {
    const double u = std::exp(-std::abs(theta));
    const double denom = 1.0 + u;
    rho = std::copysign((1.0 - u) / denom, theta);
    one_minus_rho2 = 4.0 * u / (denom * denom);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Identifiers and construction
// ---------------------------------------------------------------------------

std::string family_id(Family family) {
  switch (family) {
    case Family::poisson_log_intensity: return "poisson";
    case Family::negbin_log_intensity: return "negbin";
    case Family::exponential_log_intensity: return "exponential";
    case Family::gamma_log_scale: return "gamma";
    case Family::weibull_log_scale: return "weibull";
    case Family::gaussian_log_variance: return "gaussian-vol";
    case Family::t_log_variance: return "t-vol";
    case Family::gaussian_correlation: return "gaussian-corr";
    case Family::t_correlation: return "t-corr";
    case Family::ged_location: return "ged";
    case Family::t_location: return "t-location";
    case Family::gaussian_location: return "gaussian-location";
    case Family::gamma_two_param: return "gamma-two-param";
    case Family::gamma_two_param_exp: return "gamma-two-param-exp";
    case Family::dirichlet_log_concentration: return "dirichlet";
    case Family::gaussian_regression: return "regression";
    case Family::asymmetric_laplace_quantile: return "quantile";
  }
  throw ConfigError("family_id(): unknown family");
}

Family family_from_id(const std::string& id) {
  static const std::vector<Family> all = {
      Family::poisson_log_intensity, Family::negbin_log_intensity,
      Family::exponential_log_intensity, Family::gamma_log_scale,
      Family::weibull_log_scale, Family::gaussian_log_variance,
      Family::t_log_variance, Family::gaussian_correlation, Family::t_correlation,
      Family::ged_location, Family::t_location, Family::gaussian_location,
      Family::gamma_two_param, Family::gamma_two_param_exp,
      Family::dirichlet_log_concentration, Family::gaussian_regression,
      Family::asymmetric_laplace_quantile};
  for (Family f : all) {
    if (family_id(f) == id) return f;
  }
  throw ConfigError("family_from_id(): unknown family id '" + id + "'");
}

DensityModel::DensityModel(Family family, Vector shape, int obs_dim, int exo_dim,
                           ParamDomain domain)
    : family_(family), shape_(std::move(shape)), obs_dim_(obs_dim), exo_dim_(exo_dim),
      domain_(domain) {
  check_shape();
}

DensityModel DensityModel::poisson() {
  return DensityModel(Family::poisson_log_intensity, Vector(), 1, 0,
                      ParamDomain::unconstrained(1));
}

DensityModel DensityModel::negbin(double kappa) {
  Vector s(1);
  s << kappa;
  return DensityModel(Family::negbin_log_intensity, s, 1, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::exponential() {
  return DensityModel(Family::exponential_log_intensity, Vector(), 1, 0,
                      ParamDomain::unconstrained(1));
}

DensityModel DensityModel::gamma(double kappa) {
  Vector s(1);
  s << kappa;
  return DensityModel(Family::gamma_log_scale, s, 1, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::weibull(double kappa) {
  Vector s(1);
  s << kappa;
  return DensityModel(Family::weibull_log_scale, s, 1, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::gaussian_volatility() {
  return DensityModel(Family::gaussian_log_variance, Vector(), 1, 0,
                      ParamDomain::unconstrained(1));
}

DensityModel DensityModel::t_volatility(double nu) {
  Vector s(1);
  s << nu;
  return DensityModel(Family::t_log_variance, s, 1, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::gaussian_correlation() {
  return DensityModel(Family::gaussian_correlation, Vector(), 2, 0,
                      ParamDomain::unconstrained(1));
}

DensityModel DensityModel::t_correlation(double nu) {
  Vector s(1);
  s << nu;
  return DensityModel(Family::t_correlation, s, 2, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::ged_location(double sigma, double upsilon) {
  Vector s(2);
  s << sigma, upsilon;
  return DensityModel(Family::ged_location, s, 1, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::t_location(double sigma, double nu) {
  Vector s(2);
  s << sigma, nu;
  return DensityModel(Family::t_location, s, 1, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::gaussian_location(double obs_variance) {
  Vector s(1);
  s << obs_variance;
  return DensityModel(Family::gaussian_location, s, 1, 0, ParamDomain::unconstrained(1));
}

DensityModel DensityModel::gamma_two_param() {
  return DensityModel(Family::gamma_two_param, Vector(), 1, 0, ParamDomain::positive(2));
}

DensityModel DensityModel::gamma_two_param_exp() {
  return DensityModel(Family::gamma_two_param_exp, Vector(), 1, 0,
                      ParamDomain::unconstrained(2));
}

DensityModel DensityModel::dirichlet(int n_components) {
  if (n_components < 2) throw ShapeError("DensityModel::dirichlet(): need at least 2 components");
  return DensityModel(Family::dirichlet_log_concentration, Vector(), n_components, 0,
                      ParamDomain::unconstrained(1));
}

DensityModel DensityModel::gaussian_regression(int n_regressors, double obs_variance) {
  if (n_regressors < 1) throw ShapeError("DensityModel::gaussian_regression(): need K >= 1");
  Vector s(1);
  s << obs_variance;
  return DensityModel(Family::gaussian_regression, s, 1, n_regressors,
                      ParamDomain::unconstrained(n_regressors));
}

DensityModel DensityModel::quantiles(std::vector<double> taus, double sigma) {
  const int L = static_cast<int>(taus.size());
  if (L < 1) throw ShapeError("DensityModel::quantiles(): need at least one level");
  Vector s(L + 1);
  s[0] = sigma;
  for (int l = 0; l < L; ++l) s[l + 1] = taus[static_cast<std::size_t>(l)];
  return DensityModel(Family::asymmetric_laplace_quantile, s, 1, 0,
                      ParamDomain::unconstrained(L));
}

DensityModel DensityModel::from_id(const std::string& id) {
  switch (family_from_id(id)) {
    case Family::poisson_log_intensity: return poisson();
    case Family::negbin_log_intensity: return negbin(4.0);
    case Family::exponential_log_intensity: return exponential();
    case Family::gamma_log_scale: return gamma(1.5);
    case Family::weibull_log_scale: return weibull(1.2);
    case Family::gaussian_log_variance: return gaussian_volatility();
    case Family::t_log_variance: return t_volatility(6.0);
    case Family::gaussian_correlation: return gaussian_correlation();
    case Family::t_correlation: return t_correlation(6.0);
    case Family::ged_location: return ged_location(1.0, 2.0);
    case Family::t_location: return t_location(1.0, 2.0);
    case Family::gaussian_location: return gaussian_location(1.0);
    case Family::gamma_two_param: return gamma_two_param();
    case Family::gamma_two_param_exp: return gamma_two_param_exp();
    case Family::dirichlet_log_concentration: return dirichlet(2);
    case Family::gaussian_regression: return gaussian_regression(1, 1.0);
    case Family::asymmetric_laplace_quantile:
      return quantiles({0.05, 0.25, 0.50, 0.75, 0.95}, 1.0);
  }
  throw ConfigError("DensityModel::from_id(): unknown id '" + id + "'");
}

DensityModel DensityModel::with_shape(const Vector& psi) const {
  if (psi.size() != shape_.size()) {
    throw ShapeError("DensityModel::with_shape(): shape length mismatch");
  }
  DensityModel copy = *this;
  copy.shape_ = psi;
  copy.check_shape();
  return copy;
}

void DensityModel::check_shape() const {
  auto positive = [&](int i, const char* name) {
    if (!(shape_[i] > 0.0) || !std::isfinite(shape_[i])) {
      throw ShapeError("DensityModel: shape parameter " + std::string(name) +
                       " must be positive and finite");
    }
  };
  switch (family_) {
    case Family::negbin_log_intensity:
    case Family::gamma_log_scale:
    case Family::weibull_log_scale:
      positive(0, "kappa");
      break;
    case Family::t_log_variance:
    case Family::t_correlation:
      positive(0, "nu");
      if (!(shape_[0] > 2.0)) {
        throw ShapeError("DensityModel: variance-targeted t families require nu > 2");
      }
      break;
    case Family::ged_location:
      positive(0, "sigma");
      positive(1, "upsilon");
      break;
    case Family::t_location:
      positive(0, "sigma");
      positive(1, "nu");
      break;
    case Family::gaussian_location:
    case Family::gaussian_regression:
      positive(0, "obs_variance");
      break;
    case Family::asymmetric_laplace_quantile: {
      positive(0, "sigma");
      double prev = 0.0;
      for (int l = 1; l < shape_.size(); ++l) {
        if (!(shape_[l] > prev && shape_[l] < 1.0)) {
          throw ShapeError(
              "DensityModel: quantile levels must be strictly increasing inside (0,1)");
        }
        prev = shape_[l];
      }
      break;
    }
    default:
      break;
  }
}

void DensityModel::check_obs(const Vector& y) const {
  if (y.size() != obs_dim_) {
    throw ShapeError("DensityModel: observation has dimension " + std::to_string(y.size()) +
                     ", expected " + std::to_string(obs_dim_));
  }
  switch (family_) {
    case Family::poisson_log_intensity:
    case Family::negbin_log_intensity:
      require_count(y[0], family_id(family_).c_str());
      break;
    case Family::exponential_log_intensity:
    case Family::gamma_log_scale:
    case Family::weibull_log_scale:
    case Family::gamma_two_param:
    case Family::gamma_two_param_exp:
      require_positive_obs(y[0], family_id(family_).c_str());
      break;
    case Family::dirichlet_log_concentration: {
      double sum = 0.0;
      for (int i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0)) {
          throw SupportError("dirichlet: observation components must be positive");
        }
        sum += y[i];
      }
      if (std::abs(sum - 1.0) > kSimplexTol) {
        throw SupportError("dirichlet: observation components must sum to 1 within 1e-10");
      }
      break;
    }
    default:
      require_finite_obs(y, family_id(family_).c_str());
      break;
  }
}

void DensityModel::check_exo(const Vector& exo) const {
  if (exo.size() != exo_dim_) {
    throw ShapeError("DensityModel: exogenous input has dimension " +
                     std::to_string(exo.size()) + ", expected " + std::to_string(exo_dim_));
  }
  for (int i = 0; i < exo.size(); ++i) {
    if (!std::isfinite(exo[i])) throw ShapeError("DensityModel: exogenous input must be finite");
  }
}

// ---------------------------------------------------------------------------
// Scalar-parameter kernels
// ---------------------------------------------------------------------------

double DensityModel::log_density1(double theta, const Vector& y) const {
  Vector th(1);
  th << theta;
  if (!domain_.contains(th)) throw DomainError("log_density(): theta outside its domain");
  check_obs(y);

  switch (family_) {
    case Family::poisson_log_intensity: {
      const double k = std::round(y[0]);
      return k * theta - std::exp(theta) - lgamma(k + 1.0);
    }
    case Family::negbin_log_intensity: {
      const double kap = shape_[0];
      const double k = std::round(y[0]);
      const double lam = std::exp(theta);
      return lgamma(kap + k) - lgamma(kap) - lgamma(k + 1.0) + kap * std::log(kap) +
             k * theta - (kap + k) * std::log(kap + lam);
    }
    case Family::exponential_log_intensity:
      return theta - std::exp(theta) * y[0];
    case Family::gamma_log_scale: {
      const double kap = shape_[0];
      return (kap - 1.0) * std::log(y[0]) - y[0] * std::exp(-theta) - lgamma(kap) - kap * theta;
    }
    case Family::weibull_log_scale: {
      const double kap = shape_[0];
      const double r = std::exp(kap * (std::log(y[0]) - theta));  // (y/β)^κ
      return std::log(kap) + (kap - 1.0) * std::log(y[0]) - kap * theta - r;
    }
    case Family::gaussian_log_variance:
      return -0.5 * (kLog2Pi + theta + y[0] * y[0] * std::exp(-theta));
    case Family::t_log_variance: {
      const double nu = shape_[0];
      const double u = y[0] * y[0] * std::exp(-theta);
      return lgamma(0.5 * (nu + 1.0)) - lgamma(0.5 * nu) -
             0.5 * std::log((nu - 2.0) * M_PI) - 0.5 * theta -
             0.5 * (nu + 1.0) * std::log1p(u / (nu - 2.0));
    }
    case Family::gaussian_correlation: {
      const CorrLink link(theta);
      const double q = y[0] * y[0] + y[1] * y[1] - 2.0 * link.rho * y[0] * y[1];
      return -kLog2Pi - 0.5 * std::log(link.one_minus_rho2) - 0.5 * q / link.one_minus_rho2;
    }
    case Family::t_correlation: {
      const double nu = shape_[0];
      const CorrLink link(theta);
      const double q = y[0] * y[0] + y[1] * y[1] - 2.0 * link.rho * y[0] * y[1];
      return std::log(nu) - std::log(2.0 * M_PI * (nu - 2.0)) -
             0.5 * std::log(link.one_minus_rho2) -
             0.5 * (nu + 2.0) * std::log1p(q / ((nu - 2.0) * link.one_minus_rho2));
    }
    case Family::ged_location: {
      const double sigma = shape_[0], ups = shape_[1];
      const double z = std::abs(y[0] - theta) / sigma;
      return std::log(ups) - std::log(2.0 * sigma) - lgamma(1.0 / ups) - std::pow(z, ups);
    }
    case Family::t_location: {
      const double sigma = shape_[0], nu = shape_[1];
      const double e = y[0] - theta;
      return lgamma(0.5 * (nu + 1.0)) - lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI) -
             std::log(sigma) - 0.5 * (nu + 1.0) * std::log1p(e * e / (nu * sigma * sigma));
    }
    case Family::gaussian_location: {
      const double s2 = shape_[0];
      const double e = y[0] - theta;
      return -0.5 * (kLog2Pi + std::log(s2) + e * e / s2);
    }
    case Family::dirichlet_log_concentration: {
      const double n = static_cast<double>(obs_dim_);
      const double lam = std::exp(theta);
      double s = 0.0;
      for (int i = 0; i < y.size(); ++i) s += std::log(y[i]);
      return lgamma(lam * n) - n * lgamma(lam) + (lam - 1.0) * s;
    }
    default:
      throw ShapeError("log_density1(): family has a multivariate parameter");
  }
}

double DensityModel::score1(double theta, const Vector& y) const {
  Vector th(1);
  th << theta;
  if (!domain_.contains(th)) throw DomainError("score(): theta outside its domain");
  check_obs(y);

  switch (family_) {
    case Family::poisson_log_intensity:
      return std::round(y[0]) - std::exp(theta);
    case Family::negbin_log_intensity: {
      const double kap = shape_[0];
      const double k = std::round(y[0]);
      const double lam = std::exp(theta);
      return k - lam * (kap + k) / (kap + lam);
    }
    case Family::exponential_log_intensity:
      return 1.0 - std::exp(theta) * y[0];
    case Family::gamma_log_scale:
      return y[0] * std::exp(-theta) - shape_[0];
    case Family::weibull_log_scale: {
      const double kap = shape_[0];
      const double r = std::exp(kap * (std::log(y[0]) - theta));
      return kap * r - kap;
    }
    case Family::gaussian_log_variance:
      return 0.5 * (y[0] * y[0] * std::exp(-theta) - 1.0);
    case Family::t_log_variance: {
      const double nu = shape_[0];
      const double u = y[0] * y[0] * std::exp(-theta);
      return 0.5 * ((nu + 1.0) * u / (nu - 2.0 + u) - 1.0);
    }
    case Family::gaussian_correlation: {
      const CorrLink link(theta);
      const double z1 = y[0] - link.rho * y[1];
      const double z2 = y[1] - link.rho * y[0];
      return 0.5 * link.rho + 0.5 * z1 * z2 / link.one_minus_rho2;
    }
    case Family::t_correlation: {
      const double nu = shape_[0];
      const CorrLink link(theta);
      const double z1 = y[0] - link.rho * y[1];
      const double z2 = y[1] - link.rho * y[0];
      const double q = y[0] * y[0] + y[1] * y[1] - 2.0 * link.rho * y[0] * y[1];
      const double w = (nu + 2.0) / (nu - 2.0 + q / link.one_minus_rho2);
      return 0.5 * link.rho + 0.5 * w * z1 * z2 / link.one_minus_rho2;
    }
    case Family::ged_location: {
      const double sigma = shape_[0], ups = shape_[1];
      const double e = y[0] - theta;
      if (e == 0.0) {
        if (ups > 1.0) return 0.0;
        if (ups == 1.0) return 0.0;  // sign-convention subgradient at the kink
        throw NonDifferentiableError("ged score(): unbounded at y = theta for upsilon < 1");
      }
      const double z = std::abs(e) / sigma;
      return std::copysign((ups / sigma) * std::pow(z, ups - 1.0), e);
    }
    case Family::t_location: {
      const double sigma = shape_[0], nu = shape_[1];
      const double e = y[0] - theta;
      return (nu + 1.0) * e / (nu * sigma * sigma + e * e);
    }
    case Family::gaussian_location:
      return (y[0] - theta) / shape_[0];
    case Family::dirichlet_log_concentration: {
      const double n = static_cast<double>(obs_dim_);
      const double lam = std::exp(theta);
      double s = 0.0;
      for (int i = 0; i < y.size(); ++i) s += std::log(y[i]);
      return lam * (n * digamma(lam * n) - n * digamma(lam) + s);
    }
    default:
      throw ShapeError("score1(): family has a multivariate parameter");
  }
}

double DensityModel::hessian1(double theta, const Vector& y) const {
  Vector th(1);
  th << theta;
  if (!domain_.contains(th)) throw DomainError("hessian(): theta outside its domain");
  check_obs(y);

  switch (family_) {
    case Family::poisson_log_intensity:
      return -std::exp(theta);
    case Family::negbin_log_intensity: {
      const double kap = shape_[0];
      const double k = std::round(y[0]);
      const double lam = std::exp(theta);
      const double denom = kap + lam;
      return -kap * lam * (kap + k) / (denom * denom);
    }
    case Family::exponential_log_intensity:
      return -std::exp(theta) * y[0];
    case Family::gamma_log_scale:
      return -y[0] * std::exp(-theta);
    case Family::weibull_log_scale: {
      const double kap = shape_[0];
      const double r = std::exp(kap * (std::log(y[0]) - theta));
      return -kap * kap * r;
    }
    case Family::gaussian_log_variance:
      return -0.5 * y[0] * y[0] * std::exp(-theta);
    case Family::t_log_variance: {
      const double nu = shape_[0];
      const double u = y[0] * y[0] * std::exp(-theta);
      const double denom = nu - 2.0 + u;
      return -0.5 * (nu + 1.0) * (nu - 2.0) * u / (denom * denom);
    }
    case Family::gaussian_correlation: {
      const CorrLink link(theta);
      const double z1 = y[0] - link.rho * y[1];
      const double z2 = y[1] - link.rho * y[0];
      return 0.25 * link.one_minus_rho2 -
             0.25 * (z1 * z1 + z2 * z2) / link.one_minus_rho2;
    }
    case Family::t_correlation: {
      const double nu = shape_[0];
      const CorrLink link(theta);
      const double omr2 = link.one_minus_rho2;
      const double z1 = y[0] - link.rho * y[1];
      const double z2 = y[1] - link.rho * y[0];
      const double q = y[0] * y[0] + y[1] * y[1] - 2.0 * link.rho * y[0] * y[1];
      const double w = (nu + 2.0) / (nu - 2.0 + q / omr2);
      return 0.25 * omr2 - 0.25 * w * (z1 * z1 + z2 * z2) / omr2 +
             0.5 * w * w / (nu + 2.0) * (z1 * z1 * z2 * z2) / (omr2 * omr2);
    }
    case Family::ged_location: {
      const double sigma = shape_[0], ups = shape_[1];
      const double e = y[0] - theta;
      if (ups == 2.0) return -2.0 / (sigma * sigma);
      if (e == 0.0) {
        if (ups > 2.0) return 0.0;
        throw NonDifferentiableError("ged hessian(): undefined at y = theta for upsilon < 2");
      }
      const double z = std::abs(e) / sigma;
      return -(ups * (ups - 1.0) / (sigma * sigma)) * std::pow(z, ups - 2.0);
    }
    case Family::t_location: {
      const double sigma = shape_[0], nu = shape_[1];
      const double e = y[0] - theta;
      const double ns2 = nu * sigma * sigma;
      const double denom = ns2 + e * e;
      return (nu + 1.0) * (e * e - ns2) / (denom * denom);
    }
    case Family::gaussian_location:
      return -1.0 / shape_[0];
    case Family::dirichlet_log_concentration: {
      const double n = static_cast<double>(obs_dim_);
      const double lam = std::exp(theta);
      double s = 0.0;
      for (int i = 0; i < y.size(); ++i) s += std::log(y[i]);
      const double g = n * digamma(lam * n) - n * digamma(lam) + s;
      const double gp = n * n * trigamma(lam * n) - n * trigamma(lam);
      return lam * g + lam * lam * gp;
    }
    default:
      throw ShapeError("hessian1(): family has a multivariate parameter");
  }
}

// ---------------------------------------------------------------------------
// Vector API
// ---------------------------------------------------------------------------

double DensityModel::log_density(const Vector& theta, const Vector& y, const Vector& exo) const {
  switch (family_) {
    case Family::gamma_two_param:
    case Family::gamma_two_param_exp: {
      if (!domain_.contains(theta)) throw DomainError("log_density(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      const bool exp_link = family_ == Family::gamma_two_param_exp;
      const double a = exp_link ? std::exp(theta[0]) : theta[0];
      const double b = exp_link ? std::exp(theta[1]) : theta[1];
      return a * std::log(b) + (a - 1.0) * std::log(y[0]) - b * y[0] - lgamma(a);
    }
    case Family::gaussian_regression: {
      if (!domain_.contains(theta)) throw DomainError("log_density(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      const double s2 = shape_[0];
      const double e = y[0] - theta.dot(exo);
      return -0.5 * (kLog2Pi + std::log(s2) + e * e / s2);
    }
    case Family::asymmetric_laplace_quantile: {
      if (!domain_.contains(theta)) throw DomainError("log_density(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      const double sigma = shape_[0];
      double total = 0.0;
      for (int l = 0; l < theta.size(); ++l) {
        const double tau = shape_[l + 1];
        const double u = (y[0] - theta[l]) / sigma;
        const double check = u * (tau - (u < 0.0 ? 1.0 : 0.0));
        total += std::log(tau * (1.0 - tau) / sigma) - check;
      }
      return total;
    }
    default:
      check_exo(exo);
      if (theta.size() != 1) throw ShapeError("log_density(): theta must be scalar");
      return log_density1(theta[0], y);
  }
}

Vector DensityModel::score(const Vector& theta, const Vector& y, const Vector& exo) const {
  switch (family_) {
    case Family::gamma_two_param:
    case Family::gamma_two_param_exp: {
      if (!domain_.contains(theta)) throw DomainError("score(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      const bool exp_link = family_ == Family::gamma_two_param_exp;
      const double a = exp_link ? std::exp(theta[0]) : theta[0];
      const double b = exp_link ? std::exp(theta[1]) : theta[1];
      const double fa = std::log(b) + std::log(y[0]) - digamma(a);
      const double fb = a / b - y[0];
      Vector g(2);
      if (exp_link) {
        g << a * fa, b * fb;
      } else {
        g << fa, fb;
      }
      return g;
    }
    case Family::gaussian_regression: {
      if (!domain_.contains(theta)) throw DomainError("score(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      const double s2 = shape_[0];
      const double e = y[0] - theta.dot(exo);
      return (e / s2) * exo;
    }
    case Family::asymmetric_laplace_quantile: {
      if (!domain_.contains(theta)) throw DomainError("score(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      const double sigma = shape_[0];
      Vector g(theta.size());
      for (int l = 0; l < theta.size(); ++l) {
        const double tau = shape_[l + 1];
        if (y[0] == theta[l]) {
          throw NonDifferentiableError(
              "quantile score(): log density has a kink at y = theta; "
              "use the closed-form quantile update");
        }
        g[l] = (y[0] > theta[l]) ? tau / sigma : -(1.0 - tau) / sigma;
      }
      return g;
    }
    default: {
      check_exo(exo);
      if (theta.size() != 1) throw ShapeError("score(): theta must be scalar");
      Vector g(1);
      g << score1(theta[0], y);
      return g;
    }
  }
}

Matrix DensityModel::hessian(const Vector& theta, const Vector& y, const Vector& exo) const {
  switch (family_) {
    case Family::gamma_two_param:
    case Family::gamma_two_param_exp: {
      if (!domain_.contains(theta)) throw DomainError("hessian(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      const bool exp_link = family_ == Family::gamma_two_param_exp;
      const double a = exp_link ? std::exp(theta[0]) : theta[0];
      const double b = exp_link ? std::exp(theta[1]) : theta[1];
      Matrix h(2, 2);
      if (exp_link) {
        const double fa = std::log(b) + std::log(y[0]) - digamma(a);
        h(0, 0) = a * fa - a * a * trigamma(a);
        h(0, 1) = h(1, 0) = a;
        h(1, 1) = -b * y[0];
      } else {
        h(0, 0) = -trigamma(a);
        h(0, 1) = h(1, 0) = 1.0 / b;
        h(1, 1) = -a / (b * b);
      }
      return h;
    }
    case Family::gaussian_regression: {
      if (!domain_.contains(theta)) throw DomainError("hessian(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      return -(exo * exo.transpose()) / shape_[0];
    }
    case Family::asymmetric_laplace_quantile: {
      if (!domain_.contains(theta)) throw DomainError("hessian(): theta outside its domain");
      check_obs(y);
      check_exo(exo);
      // Piecewise linear in θ: the Hessian is zero almost everywhere.  The
      // model advertises this through piecewise_linear().
      return Matrix::Zero(theta.size(), theta.size());
    }
    default: {
      check_exo(exo);
      if (theta.size() != 1) throw ShapeError("hessian(): theta must be scalar");
      Matrix h(1, 1);
      h << hessian1(theta[0], y);
      return h;
    }
  }
}

ConcavityInfo DensityModel::concavity_info() const {
  switch (family_) {
    case Family::poisson_log_intensity:
    case Family::negbin_log_intensity:
    case Family::exponential_log_intensity:
    case Family::gamma_log_scale:
    case Family::weibull_log_scale:
    case Family::gaussian_log_variance:
    case Family::t_log_variance:
    case Family::dirichlet_log_concentration:
    case Family::gamma_two_param:
    case Family::gaussian_regression:
    case Family::asymmetric_laplace_quantile:
      return {true, 0.0, std::nullopt};
    case Family::ged_location:
      if (shape_[1] >= 1.0) return {true, 0.0, std::nullopt};
      return {false, 0.0, std::nullopt};  // cusp at y: Hessian unbounded above
    case Family::gaussian_correlation:
    case Family::t_correlation:
      return {false, 0.0, 0.25};
    case Family::t_location: {
      const double sigma = shape_[0], nu = shape_[1];
      return {false, 0.0, (nu + 1.0) / (8.0 * nu * sigma * sigma)};
    }
    case Family::gaussian_location:
      return {true, 1.0 / shape_[0], std::nullopt};
    case Family::gamma_two_param_exp:
      return {false, 0.0, std::nullopt};
  }
  throw ConfigError("concavity_info(): unknown family");
}

}  // namespace isdf
