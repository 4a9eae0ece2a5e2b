#include "isdf/filter.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace isdf {

namespace {

double spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  double rho = 0.0;
  for (int i = 0; i < a.rows(); ++i) rho = std::max(rho, std::abs(es.eigenvalues()[i]));
  return rho;
}

}  // namespace

// ---------------------------------------------------------------------------
// PredictionSpec
// ---------------------------------------------------------------------------

PredictionSpec PredictionSpec::unconstrained(Vector omega, Matrix phi) {
  if (phi.rows() != omega.size() || phi.cols() != omega.size()) {
    throw ShapeError("PredictionSpec: phi must be K×K matching omega");
  }
  PredictionSpec spec;
  spec.omega = std::move(omega);
  spec.phi = std::move(phi);
  spec.constraint_mode = ConstraintMode::unconstrained;
  return spec;
}

PredictionSpec PredictionSpec::positive_diagonal(Vector omega, const Vector& phi_diag) {
  const int k = static_cast<int>(omega.size());
  if (phi_diag.size() != k) throw ShapeError("PredictionSpec: phi_diag must match omega");
  for (int i = 0; i < k; ++i) {
    if (!(omega[i] > 0.0)) {
      throw ConfigError("PredictionSpec: positive_diagonal requires omega > 0 elementwise");
    }
    if (!(phi_diag[i] > 0.0 && phi_diag[i] < 1.0)) {
      throw ConfigError("PredictionSpec: positive_diagonal requires phi diagonal in (0,1)");
    }
  }
  PredictionSpec spec;
  spec.omega = std::move(omega);
  spec.phi = phi_diag.asDiagonal();
  spec.constraint_mode = ConstraintMode::positive_diagonal;
  return spec;
}

PredictionSpec PredictionSpec::convex_combination(Vector omega, double c) {
  if (!(c >= 0.0 && c < 1.0)) {
    throw ConfigError("PredictionSpec: convex_combination requires phi in [0,1)");
  }
  const int k = static_cast<int>(omega.size());
  PredictionSpec spec;
  spec.omega = std::move(omega);
  spec.phi = c * Matrix::Identity(k, k);
  spec.constraint_mode = ConstraintMode::convex_combination;
  return spec;
}

PredictionSpec PredictionSpec::identity(int k) {
  PredictionSpec spec;
  spec.omega = Vector::Zero(k);
  spec.phi = Matrix::Identity(k, k);
  spec.constraint_mode = ConstraintMode::identity;
  return spec;
}

void PredictionSpec::validate(const ParamDomain& domain) const {
  if (phi.rows() != omega.size() || phi.cols() != omega.size()) {
    throw ShapeError("PredictionSpec: phi must be K×K matching omega");
  }
  if (domain.dim != omega.size()) {
    throw ShapeError("PredictionSpec: dimension does not match the parameter domain");
  }
  switch (constraint_mode) {
    case ConstraintMode::unconstrained:
      break;
    case ConstraintMode::positive_diagonal:
      for (int i = 0; i < omega.size(); ++i) {
        if (!(omega[i] > 0.0)) {
          throw ConfigError("PredictionSpec: positive_diagonal requires omega > 0");
        }
        for (int j = 0; j < omega.size(); ++j) {
          const double v = phi(i, j);
          if (i == j ? !(v > 0.0 && v < 1.0) : v != 0.0) {
            throw ConfigError(
                "PredictionSpec: positive_diagonal requires diagonal phi with entries in (0,1)");
          }
        }
      }
      break;
    case ConstraintMode::convex_combination: {
      const double c = phi(0, 0);
      if (!(c >= 0.0 && c < 1.0) ||
          (phi - c * Matrix::Identity(phi.rows(), phi.cols())).norm() > 1e-14 * (1.0 + c)) {
        throw ConfigError("PredictionSpec: convex_combination requires phi = c·I, c in [0,1)");
      }
      if (!domain.contains(unconditional_level())) {
        throw ConfigError("PredictionSpec: long-run mean outside the parameter domain");
      }
      break;
    }
    case ConstraintMode::identity:
      if (omega.norm() != 0.0 ||
          (phi - Matrix::Identity(phi.rows(), phi.cols())).norm() != 0.0) {
        throw ConfigError("PredictionSpec: identity mode requires omega = 0 and phi = I");
      }
      break;
  }
}

Vector PredictionSpec::unconditional_level() const {
  if (spectral_radius(phi) >= 1.0 - 1e-12) {
    throw SpectralRadiusError(
        "PredictionSpec: unconditional level needs spectral radius of phi below one");
  }
  const int k = dim();
  return (Matrix::Identity(k, k) - phi).partialPivLu().solve(omega);
}

ParamVector predict(const ParamVector& theta_upd, const PredictionSpec& spec) {
  if (spec.dim() != theta_upd.values.size()) {
    throw ShapeError("predict: dimension mismatch");
  }
  const Vector next = spec.omega + spec.phi * theta_upd.values;
  if (!theta_upd.domain.contains(next)) {
    throw DomainEscape("predict: prediction left the parameter domain");
  }
  return ParamVector(next, theta_upd.domain);
}

FilterMode filter_mode_from_id(const std::string& id) {
  if (id == "isd") return FilterMode::isd;
  if (id == "esd") return FilterMode::esd;
  throw ConfigError("filter mode must be 'isd' or 'esd', got '" + id + "'");
}

std::string filter_mode_id(FilterMode mode) { return mode == FilterMode::isd ? "isd" : "esd"; }

// ---------------------------------------------------------------------------
// run_filter
// ---------------------------------------------------------------------------

FilterPath run_filter(const DensityModel& base_model, const Matrix& data, const Matrix& exo,
                      const StaticParams& statics, const FilterOptions& opts) {
  const DensityModel model =
      statics.psi.size() > 0 ? base_model.with_shape(statics.psi) : base_model;
  const int k = model.param_dim();
  const int t_len = static_cast<int>(data.rows());
  const ParamDomain domain = model.domain();

  if (data.cols() != model.obs_dim()) {
    throw ShapeError("run_filter: data has " + std::to_string(data.cols()) +
                     " columns, model expects " + std::to_string(model.obs_dim()));
  }
  if (model.exo_dim() > 0) {
    if (exo.rows() != t_len || exo.cols() != model.exo_dim()) {
      throw LengthMismatch("run_filter: exogenous series must be T×" +
                           std::to_string(model.exo_dim()) + " aligned with the data");
    }
  } else if (exo.size() != 0) {
    throw ShapeError("run_filter: model takes no exogenous inputs");
  }
  if (opts.update_perturbations != nullptr &&
      (opts.update_perturbations->rows() != t_len || opts.update_perturbations->cols() != k)) {
    throw ShapeError("run_filter: update perturbations must be T×K");
  }
  statics.prediction.validate(domain);
  if (statics.penalty.per_step() && k != 1) {
    throw ConfigError("run_filter: info-scaled penalties apply to scalar parameters only");
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  FilterPath path;
  path.predictions = Matrix::Constant(t_len, k, nan);
  path.updates = Matrix::Constant(t_len, k, nan);
  path.loglik_contribs = Vector::Zero(t_len);
  path.flags.resize(static_cast<std::size_t>(t_len));
  path.final_prediction = Vector::Constant(k, nan);

  Vector level;
  if (statics.init.has_value()) {
    level = *statics.init;
    if (!domain.contains(level)) {
      throw DomainError("run_filter: init outside the parameter domain");
    }
  } else {
    level = statics.prediction.unconditional_level();
    if (!domain.contains(level)) {
      throw ConfigError("run_filter: unconditional level outside the domain; supply init");
    }
  }
  if (t_len == 0) {
    path.final_prediction = statics.prediction.omega + statics.prediction.phi * level;
    return path;
  }

  // θ_{1|0} from θ_{0|0}.
  Vector pred = statics.prediction.omega + statics.prediction.phi * level;

  auto exceeds_guard = [&](const Vector& v) {
    for (int i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i]) || std::abs(v[i]) > opts.overflow_guard) return true;
    }
    return false;
  };

  // `sentinel_from` marks the first step whose likelihood contribution can
  // no longer be computed; a divergence caught in the update keeps the valid
  // contribution already evaluated at the prediction of the same step.
  auto mark_divergence = [&](int t, int sentinel_from) {
    path.diverged = true;
    path.first_divergence_index = t;
    for (int s = sentinel_from; s < t_len; ++s) {
      path.loglik_contribs[s] = -kInfinity;
    }
  };

  const Vector no_exo;
  for (int t = 0; t < t_len; ++t) {
    StepFlag& flag = path.flags[static_cast<std::size_t>(t)];
    const Vector y = data.row(t).transpose();
    const Vector x = model.exo_dim() > 0 ? Vector(exo.row(t).transpose()) : no_exo;

    // Divergence of the prediction (possible in explicit mode).
    if (exceeds_guard(pred) || (opts.mode == FilterMode::isd && !domain.contains(pred))) {
      mark_divergence(t, t);
      break;
    }
    path.predictions.row(t) = pred.transpose();

    double contrib;
    try {
      contrib = model.log_density(pred, y, x);
    } catch (const Error& e) {
      // Prediction outside the density's domain (explicit-mode escape).
      if (opts.fail_fast) throw;
      flag.solver_error = true;
      flag.message = e.what();
      mark_divergence(t, t);
      break;
    }
    path.loglik_contribs[t] = contrib;

    Vector upd;
    try {
      if (opts.mode == FilterMode::isd) {
        UpdateResult res = isd_update(model, y, ParamVector(pred, domain), statics.penalty,
                                      x, opts.solver);
        upd = res.theta_upd.values;
        flag.solver = res.solver;
        flag.iterations = res.iterations;
      } else {
        const Matrix p_t = statics.penalty.resolve(pred);
        EsdResult res = esd_update(model, y, ParamVector(pred, domain),
                                   p_t.inverse(), x);
        upd = res.theta_upd;
        flag.esd_out_of_domain = res.out_of_domain;
      }
    } catch (const Error& e) {
      if (opts.fail_fast) throw;
      flag.solver_error = true;
      flag.message = e.what();
      mark_divergence(t, t + 1);
      break;
    }

    if (opts.update_perturbations != nullptr) {
      upd += opts.update_perturbations->row(t).transpose();
      if (opts.mode == FilterMode::isd && !domain.contains(upd)) {
        flag.solver_error = true;
        flag.message = "perturbed update left the parameter domain";
        mark_divergence(t, t + 1);
        break;
      }
    }
    path.updates.row(t) = upd.transpose();

    if (exceeds_guard(upd)) {
      mark_divergence(t, t + 1);
      break;
    }
    pred = statics.prediction.omega + statics.prediction.phi * upd;
  }

  if (!path.diverged) {
    path.final_prediction = pred;
  }
  path.total_loglik = 0.0;
  for (int t = 0; t < t_len; ++t) path.total_loglik += path.loglik_contribs[t];
  return path;
}

std::vector<double> two_init_probe(const DensityModel& model, const Matrix& data,
                                   const Matrix& exo, const StaticParams& statics,
                                   const Vector& init_a, const Vector& init_b,
                                   const FilterOptions& opts) {
  StaticParams sa = statics;
  sa.init = init_a;
  StaticParams sb = statics;
  sb.init = init_b;
  const FilterPath pa = run_filter(model, data, exo, sa, opts);
  const FilterPath pb = run_filter(model, data, exo, sb, opts);
  std::vector<double> dist(static_cast<std::size_t>(data.rows()));
  for (int t = 0; t < data.rows(); ++t) {
    dist[static_cast<std::size_t>(t)] = (pa.predictions.row(t) - pb.predictions.row(t)).norm();
  }
  return dist;
}

}  // namespace isdf
