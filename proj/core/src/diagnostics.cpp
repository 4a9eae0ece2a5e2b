#include "isdf/diagnostics.hpp"

#include "isdf/rng.hpp"
#include "isdf/simulate.hpp"
#include "isdf/update.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace isdf {

namespace {

// Relative tolerance for symmetry and eigenvalue-sign checks.
constexpr double kSpectralTol = 1e-10;

struct Spectrum {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

Matrix symmetrized(const Matrix& M, const char* who) {
  if (M.rows() != M.cols()) {
    throw ShapeError(std::string(who) + ": matrix must be square");
  }
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw ShapeError(std::string(who) + ": matrix must be symmetric");
  }
  return 0.5 * (M + M.transpose());
}

Spectrum spectrum(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

Spectrum spd_spectrum(const Matrix& P, const char* who) {
  const Matrix S = symmetrized(P, who);
  const Spectrum sp = spectrum(S);
  if (!(sp.lambda_min > 0.0) || !std::isfinite(sp.lambda_max)) {
    throw ShapeError(std::string(who) + ": matrix must be positive definite");
  }
  return sp;
}

void require_nonnegative_alpha(double alpha, const char* who) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError(std::string(who) +
                      ": concavity constant must be finite and nonnegative");
  }
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

std::string contraction_kind_id(ContractionKind kind) {
  switch (kind) {
    case ContractionKind::update_shrinkage: return "update_shrinkage";
    case ContractionKind::implicit_update_stability:
      return "implicit_update_stability";
    case ContractionKind::explicit_update_stability:
      return "explicit_update_stability";
    case ContractionKind::prediction_contraction:
      return "prediction_contraction";
    case ContractionKind::noise_region_contraction:
      return "noise_region_contraction";
  }
  throw ConfigError("contraction_kind_id: unknown kind");
}

double contraction_coefficient(const Matrix& P, double alpha) {
  require_nonnegative_alpha(alpha, "contraction_coefficient");
  const Spectrum sp = spd_spectrum(P, "contraction_coefficient");
  const double ratio = sp.lambda_max / (sp.lambda_max + alpha);
  return clamp01(ratio * ratio);
}

double contraction_coefficient(double p, double alpha) {
  Matrix P(1, 1);
  P(0, 0) = p;
  return contraction_coefficient(P, alpha);
}

double kappa(const Matrix& P, const Matrix& phi, double alpha) {
  require_nonnegative_alpha(alpha, "kappa");
  const Matrix S = symmetrized(P, "kappa");
  const Spectrum sp = spd_spectrum(S, "kappa");
  if (phi.rows() != P.rows() || phi.cols() != P.cols()) {
    throw ShapeError("kappa: autoregressive matrix dimension mismatch");
  }
  const Matrix gap = S - phi.transpose() * S * phi;
  double gap_min = spectrum(0.5 * (gap + gap.transpose())).lambda_min;
  if (gap_min < -kSpectralTol * sp.lambda_max) {
    throw NotNonExpansive(
        "kappa: the forecast map expands the penalty-weighted norm "
        "(P - Phi'*P*Phi has a negative eigenvalue)");
  }
  gap_min = std::max(0.0, gap_min);
  const double denom = (sp.lambda_max + alpha) * (sp.lambda_max + alpha);
  return clamp01(sp.lambda_max * (sp.lambda_max - gap_min) / denom);
}

double kappa(double p, double phi, double alpha) {
  Matrix P(1, 1), F(1, 1);
  P(0, 0) = p;
  F(0, 0) = phi;
  return kappa(P, F, alpha);
}

ContractionReport contraction_report(ContractionKind kind, const Matrix& P,
                                     double alpha, const Matrix& phi,
                                     double lipschitz) {
  require_nonnegative_alpha(alpha, "contraction_report");
  const Spectrum sp = spd_spectrum(P, "contraction_report");

  ContractionReport report;
  report.kind = kind;
  report.lambda_max_p = sp.lambda_max;
  report.lambda_min_p = sp.lambda_min;
  report.alpha = alpha;

  switch (kind) {
    case ContractionKind::update_shrinkage:
    case ContractionKind::implicit_update_stability:
    case ContractionKind::noise_region_contraction:
      report.coefficient = contraction_coefficient(P, alpha);
      break;
    case ContractionKind::prediction_contraction: {
      report.coefficient = kappa(P, phi, alpha);
      report.phi = phi;
      const Matrix S = symmetrized(P, "contraction_report");
      const Matrix gap = S - phi.transpose() * S * phi;
      report.lambda_min_gap =
          std::max(0.0, spectrum(0.5 * (gap + gap.transpose())).lambda_min);
      break;
    }
    case ContractionKind::explicit_update_stability: {
      if (!(lipschitz > 0.0) || !std::isfinite(lipschitz)) {
        throw ConfigError(
            "contraction_report: explicit update stability needs a positive "
            "finite score Lipschitz bound");
      }
      if (alpha > lipschitz) {
        throw ConfigError(
            "contraction_report: concavity constant cannot exceed the score "
            "Lipschitz bound");
      }
      if (sp.lambda_min < 0.5 * lipschitz * (1.0 - kSpectralTol)) {
        throw NotNonExpansive(
            "contraction_report: explicit update stability requires the "
            "smallest penalty eigenvalue to be at least half the score "
            "Lipschitz bound");
      }
      report.lipschitz = lipschitz;
      report.coefficient = clamp01(
          (sp.lambda_max - alpha * (2.0 - lipschitz / sp.lambda_min)) /
          sp.lambda_max);
      break;
    }
  }
  return report;
}

InvertibilityCertificate invertibility_certificate(const Matrix& P,
                                                   const Matrix& phi,
                                                   double alpha) {
  InvertibilityCertificate cert;
  cert.kappa_value = kappa(P, phi, alpha);
  cert.certified = cert.kappa_value < 1.0;
  cert.log_decay_per_step =
      cert.kappa_value > 0.0 ? 0.5 * std::log(cert.kappa_value)
                             : -std::numeric_limits<double>::infinity();
  return cert;
}

double ndr_radius_sq(double sigma2, double p, double alpha) {
  if (!(sigma2 > 0.0) || !(p > 0.0) || !(alpha > 0.0) ||
      !std::isfinite(sigma2) || !std::isfinite(p) || !std::isfinite(alpha)) {
    throw ConfigError("ndr_radius_sq: all inputs must be positive and finite");
  }
  return sigma2 / (2.0 * p * alpha + alpha * alpha);
}

MseDecomposition verify_mse_decomposition(const DensityModel& model,
                                          const Vector& theta_star,
                                          const Vector& theta_pred,
                                          const Matrix& P, int n_draws,
                                          std::uint64_t seed, FilterMode mode) {
  const int k = model.param_dim();
  if (theta_star.size() != k || theta_pred.size() != k) {
    throw LengthMismatch(
        "verify_mse_decomposition: parameter length disagrees with the model");
  }
  if (P.rows() != k || P.cols() != k) {
    throw ShapeError("verify_mse_decomposition: penalty dimension mismatch");
  }
  if (n_draws < 2) {
    throw ConfigError("verify_mse_decomposition: need at least two draws");
  }
  const Matrix S = symmetrized(P, "verify_mse_decomposition");
  spd_spectrum(S, "verify_mse_decomposition");
  const Matrix P_inv = S.llt().solve(Matrix::Identity(k, k));

  const ParamVector star_pv = model.param_vector(theta_star);
  const ParamVector pred_pv = model.param_vector(theta_pred);
  const PenaltySpec penalty = PenaltySpec::static_matrix(S);

  const Vector d = theta_pred - theta_star;
  const double se_before = d.dot(S * d);

  Rng rng(seed);
  double sum_lhs = 0.0, sum_con = 0.0, sum_exp = 0.0;
  // Welford accumulation of the per-draw balance residual, whose exact mean
  // is zero because the score at the pseudo-truth has mean zero under draws
  // from the model at the pseudo-truth.
  double res_mean = 0.0, res_m2 = 0.0;

  for (int i = 0; i < n_draws; ++i) {
    const Vector y = draw_observation(model, theta_star, rng);

    Vector theta_upd;
    double contractive_i = 0.0;
    double expansive_i = 0.0;
    if (mode == FilterMode::isd) {
      theta_upd = isd_update(model, y, pred_pv, penalty).theta_upd.values;
      const Matrix info = compute_average_hessian(model, y, model.param_vector(theta_upd), star_pv);
      const Vector e = theta_upd - theta_star;
      contractive_i = e.dot((2.0 * info + info * P_inv * info) * e);
      const Vector g = model.score(theta_star, y);
      expansive_i = g.dot(P_inv * g);
    } else {
      const Vector g_pred = model.score(theta_pred, y);
      theta_upd = theta_pred + P_inv * g_pred;
      const Matrix info = compute_average_hessian(model, y, pred_pv, star_pv);
      contractive_i = 2.0 * d.dot(info * d);
      expansive_i = g_pred.dot(P_inv * g_pred);
    }

    const Vector e_after = theta_upd - theta_star;
    const double lhs_i = e_after.dot(S * e_after);
    const double res_i = lhs_i - (se_before - contractive_i + expansive_i);

    sum_lhs += lhs_i;
    sum_con += contractive_i;
    sum_exp += expansive_i;
    const double delta = res_i - res_mean;
    res_mean += delta / static_cast<double>(i + 1);
    res_m2 += delta * (res_i - res_mean);
  }

  const double n = static_cast<double>(n_draws);
  MseDecomposition out;
  out.mse_after = sum_lhs / n;
  out.se_before = se_before;
  out.contractive = sum_con / n;
  out.expansive = sum_exp / n;
  out.residual = res_mean;
  out.mc_standard_error = std::sqrt(res_m2 / (n - 1.0) / n);
  out.n_draws = n_draws;
  out.mode = mode;
  return out;
}

double t_location_stability_bound(double H, double sigma, double nu) {
  if (!(H >= 0.0) || !(sigma > 0.0) || !(nu > 0.0) || !std::isfinite(H) ||
      !std::isfinite(sigma) || !std::isfinite(nu)) {
    throw ConfigError(
        "t_location_stability_bound: needs H >= 0 and positive sigma, nu");
  }
  return 1.0 - H * (nu + 1.0) / (8.0 * nu * sigma * sigma);
}

ScoreMoments cauchy_t_score_moments(double mu, double sigma, double nu,
                                    double gamma) {
  if (!(sigma > 0.0) || !(nu > 0.0) || !(gamma > 0.0)) {
    throw ConfigError(
        "cauchy_t_score_moments: sigma, nu, gamma must be positive");
  }
  const double xi = std::sqrt(nu) * sigma + gamma;
  const double denom = mu * mu + xi * xi;
  ScoreMoments out;
  out.m1 = -mu * nu * sigma * sigma / denom;
  out.m2 = std::pow(nu, 1.5) * sigma * sigma * sigma *
           (std::sqrt(nu) * sigma * mu * mu + xi * mu * mu +
            gamma * xi * xi) /
           (2.0 * denom * denom);
  return out;
}

std::vector<double> mse_curve_nonconcave(double H, double gamma, double sigma,
                                         double nu,
                                         const std::vector<double>& se_grid) {
  if (!(H > 0.0) || !(gamma > 0.0) || !(sigma > 0.0) || !(nu > 0.0)) {
    throw ConfigError("mse_curve_nonconcave: H, gamma, sigma, nu must be positive");
  }
  std::vector<double> out;
  out.reserve(se_grid.size());
  for (double se : se_grid) {
    if (!(se >= 0.0) || !std::isfinite(se)) {
      throw ConfigError(
          "mse_curve_nonconcave: squared errors must be finite and nonnegative");
    }
    const double mu = std::sqrt(se);
    const ScoreMoments m = cauchy_t_score_moments(mu, sigma, nu, gamma);
    out.push_back(se + 2.0 * H * mu * m.m1 + H * H * m.m2);
  }
  return out;
}

}  // namespace isdf
