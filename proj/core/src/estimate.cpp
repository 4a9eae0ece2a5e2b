#include "isdf/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "isdf/rng.hpp"

namespace isdf {

namespace {

/// One estimable shape entry: its report name, position in the shape vector,
/// and whether it lives on the (2,∞) branch (variance-targeted t families).
struct PsiEntry {
  const char* name;
  int index;
  bool nu_minus_two;
};

std::vector<PsiEntry> psi_entries(const DensityModel& model) {
  switch (model.family()) {
    case Family::negbin_log_intensity:
    case Family::gamma_log_scale:
    case Family::weibull_log_scale:
      return {{"kappa", 0, false}};
    case Family::t_log_variance:
    case Family::t_correlation:
      return {{"nu", 0, true}};
    case Family::ged_location:
      return {{"sigma", 0, false}, {"upsilon", 1, false}};
    case Family::t_location:
      return {{"sigma", 0, false}, {"nu", 1, false}};
    case Family::gaussian_location:
    case Family::gaussian_regression:
      return {{"obs_variance", 0, false}};
    case Family::asymmetric_laplace_quantile:
      return {{"sigma", 0, false}};  // the levels themselves are structural
    default:
      return {};
  }
}

bool is_pinned(const std::vector<std::pair<int, double>>& pins, int index) {
  for (const auto& [i, v] : pins) {
    if (i == index) return true;
  }
  return false;
}

std::string indexed(const std::string& base, int i, int n) {
  if (n == 1) return base;
  return base + "_" + std::to_string(i);
}

/// Lower-triangular log-Cholesky: z holds column-major lower entries with the
/// diagonal stored in logs, so every z produces an SPD matrix L·Lᵀ.
Matrix chol_from_log(const Vector& z, int k) {
  Matrix L = Matrix::Zero(k, k);
  int pos = 0;
  for (int j = 0; j < k; ++j) {
    L(j, j) = std::exp(z[pos++]);
    for (int i = j + 1; i < k; ++i) L(i, j) = z[pos++];
  }
  return L * L.transpose();
}

Vector log_chol_coords(const Matrix& spd, int k) {
  Eigen::LLT<Matrix> llt(spd);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("Transform::inverse(): penalty/innovation matrix is not SPD");
  }
  Matrix L = llt.matrixL();
  Vector z(k * (k + 1) / 2);
  int pos = 0;
  for (int j = 0; j < k; ++j) {
    z[pos++] = std::log(L(j, j));
    for (int i = j + 1; i < k; ++i) z[pos++] = L(i, j);
  }
  return z;
}

double atanh_clamped(double x) {
  const double c = std::clamp(x, -1.0 + 1e-12, 1.0 - 1e-12);
  return std::atanh(c);
}

// tanh(z) rounds to exactly 1.0 once z ≥ ~18.4, which would push the spectral
// radius onto the Lyapunov solve's exclusion boundary; the scale keeps every
// reachable Φ strictly inside it.
constexpr double kPhiScale = 1.0 - 1e-8;

}  // namespace

PenaltyKind penalty_kind_from_id(const std::string& id) {
  if (id == "scalar_h") return PenaltyKind::scalar_h;
  if (id == "info_scaled") return PenaltyKind::info_scaled;
  if (id == "lyapunov") return PenaltyKind::lyapunov;
  if (id == "static_full") return PenaltyKind::static_full;
  throw ConfigError("unknown penalty kind '" + id + "'");
}

std::string penalty_kind_id(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::scalar_h: return "scalar_h";
    case PenaltyKind::info_scaled: return "info_scaled";
    case PenaltyKind::lyapunov: return "lyapunov";
    case PenaltyKind::static_full: return "static_full";
  }
  throw ConfigError("unknown penalty kind");
}

Transform::Transform(const DensityModel& model, const FitConfig& config)
    : model_(model), config_(config),
      scaling_(config.scaling ? *config.scaling : ScalingSpec::default_for(model)),
      k_(model.param_dim()) {
  using Mode = PredictionSpec::ConstraintMode;

  // Penalty block.
  const bool h_kind = config_.penalty_kind == PenaltyKind::scalar_h ||
                      config_.penalty_kind == PenaltyKind::info_scaled;
  if (config_.pin_h && !h_kind) {
    throw ConfigError("Transform: pin_h applies only to the scalar penalty kinds");
  }
  if (config_.penalty_kind == PenaltyKind::info_scaled && k_ != 1) {
    throw ConfigError("Transform: the information-scaled penalty requires a scalar state");
  }
  if (h_kind) {
    n_penalty_ = config_.pin_h ? 0 : 1;
    if (n_penalty_ > 0) names_.push_back("H");
  } else {
    n_penalty_ = k_ * (k_ + 1) / 2;
    const std::string base =
        config_.penalty_kind == PenaltyKind::lyapunov ? "delta_chol" : "P_chol";
    for (int j = 0; j < k_; ++j) {
      names_.push_back(base + "_" + std::to_string(j) + "_" + std::to_string(j));
      for (int i = j + 1; i < k_; ++i) {
        names_.push_back(base + "_" + std::to_string(i) + "_" + std::to_string(j));
      }
    }
  }

  // Omega block (identity prediction pins ω = 0 structurally).
  if (config_.constraint_mode == Mode::identity || config_.pin_omega) {
    if (config_.pin_omega && config_.pin_omega->size() != k_) {
      throw ConfigError("Transform: pin_omega has the wrong length");
    }
    n_omega_ = 0;
  } else {
    n_omega_ = k_;
    for (int i = 0; i < k_; ++i) names_.push_back(indexed("omega", i, k_));
  }

  // Phi block.
  if (config_.constraint_mode == Mode::identity || config_.pin_phi) {
    n_phi_ = 0;
  } else if (config_.constraint_mode == Mode::convex_combination) {
    n_phi_ = 1;
    names_.push_back("phi");
  } else {
    n_phi_ = k_;
    for (int i = 0; i < k_; ++i) names_.push_back(indexed("phi", i, k_));
  }

  // Shape block.
  if (config_.estimate_psi) {
    for (const PsiEntry& e : psi_entries(model_)) {
      if (!is_pinned(config_.pin_psi, e.index)) {
        psi_indices_.push_back(e.index);
        names_.push_back(e.name);
      }
    }
  }
  for (const auto& [i, v] : config_.pin_psi) {
    if (i < 0 || i >= model_.shape().size()) {
      throw ConfigError("Transform: pin_psi index out of range");
    }
    (void)v;
  }

  // Initial-level block.
  if (config_.estimate_init) {
    if (config_.init_theta) {
      throw ConfigError("Transform: estimate_init and init_theta are mutually exclusive");
    }
    if (model_.domain().kind != DomainKind::unconstrained) {
      throw ConfigError("Transform: estimate_init requires an unconstrained domain");
    }
    n_init_ = k_;
    for (int i = 0; i < k_; ++i) names_.push_back(indexed("init", i, k_));
  }

  dim_ = n_penalty_ + n_omega_ + n_phi_ + static_cast<int>(psi_indices_.size()) + n_init_;
}

StaticParams Transform::forward(const Vector& z) const {
  using Mode = PredictionSpec::ConstraintMode;
  if (z.size() != dim_) throw ConfigError("Transform::forward(): wrong coordinate length");

  const int psi_off = n_penalty_ + n_omega_ + n_phi_;
  const int init_off = psi_off + static_cast<int>(psi_indices_.size());

  // Shape first: the scalar-H penalty depends on the scaling factor m(ψ).
  Vector psi = model_.shape();
  for (const auto& [i, v] : config_.pin_psi) psi[i] = v;
  {
    const auto entries = psi_entries(model_);
    int pos = psi_off;
    for (int idx : psi_indices_) {
      bool nu_branch = false;
      for (const PsiEntry& e : entries) {
        if (e.index == idx) nu_branch = e.nu_minus_two;
      }
      psi[idx] = nu_branch ? 2.0 + std::exp(z[pos]) : std::exp(z[pos]);
      ++pos;
    }
  }
  const DensityModel shaped = psi.size() > 0 ? model_.with_shape(psi) : model_;

  // Omega.
  const bool positive_omega =
      config_.constraint_mode == Mode::positive_diagonal ||
      model_.domain().kind == DomainKind::positive;
  Vector omega = Vector::Zero(k_);
  if (config_.constraint_mode != Mode::identity) {
    if (config_.pin_omega) {
      omega = *config_.pin_omega;
    } else {
      for (int i = 0; i < k_; ++i) {
        omega[i] = positive_omega ? std::exp(z[n_penalty_ + i]) : z[n_penalty_ + i];
      }
    }
  }

  // Phi / prediction spec.
  PredictionSpec prediction = PredictionSpec::identity(k_);
  if (config_.constraint_mode != Mode::identity) {
    const int phi_off = n_penalty_ + n_omega_;
    auto phi_value = [&](double raw) {
      const double s = kPhiScale * std::tanh(raw);
      return config_.constraint_mode == Mode::unconstrained ? s : 0.5 * (1.0 + s);
    };
    if (config_.constraint_mode == Mode::convex_combination) {
      const double c = config_.pin_phi ? *config_.pin_phi : phi_value(z[phi_off]);
      prediction = PredictionSpec::convex_combination(omega, c);
    } else {
      Vector diag(k_);
      for (int i = 0; i < k_; ++i) {
        diag[i] = config_.pin_phi ? *config_.pin_phi : phi_value(z[phi_off + i]);
      }
      if (config_.constraint_mode == Mode::positive_diagonal) {
        prediction = PredictionSpec::positive_diagonal(omega, diag);
      } else {
        prediction = PredictionSpec::unconstrained(omega, Matrix(diag.asDiagonal()));
      }
    }
  }

  // Penalty.
  PenaltySpec penalty = PenaltySpec::static_scalar(1.0);
  std::optional<double> scalar_h;
  switch (config_.penalty_kind) {
    case PenaltyKind::scalar_h: {
      const double H = config_.pin_h ? *config_.pin_h : std::exp(z[0]);
      const double m = scaling_.factor(shaped);
      penalty = PenaltySpec::static_matrix(Matrix::Identity(k_, k_) / (H * m));
      scalar_h = H;
      break;
    }
    case PenaltyKind::info_scaled: {
      const double h = config_.pin_h ? *config_.pin_h : std::exp(z[0]);
      penalty = PenaltySpec::info_scaled(h);
      scalar_h = h;
      break;
    }
    case PenaltyKind::lyapunov: {
      const Matrix delta = chol_from_log(z.head(n_penalty_), k_);
      penalty = PenaltySpec::lyapunov(delta, prediction.phi);
      break;
    }
    case PenaltyKind::static_full: {
      penalty = PenaltySpec::static_matrix(chol_from_log(z.head(n_penalty_), k_));
      break;
    }
  }

  StaticParams statics;
  statics.penalty = penalty;
  statics.prediction = prediction;
  statics.psi = psi;
  statics.scalar_h = scalar_h;
  if (config_.estimate_init) {
    statics.init = Vector(z.segment(init_off, k_));
  } else if (config_.init_theta) {
    statics.init = *config_.init_theta;
  }
  return statics;
}

Vector Transform::inverse(const StaticParams& params) const {
  using Mode = PredictionSpec::ConstraintMode;
  Vector z = Vector::Zero(dim_);

  Vector psi = params.psi.size() > 0 ? params.psi : model_.shape();
  const DensityModel shaped = psi.size() > 0 ? model_.with_shape(psi) : model_;

  // Penalty block.
  if (n_penalty_ > 0) {
    switch (config_.penalty_kind) {
      case PenaltyKind::scalar_h: {
        double H;
        if (params.scalar_h) {
          H = *params.scalar_h;
        } else {
          const double m = scaling_.factor(shaped);
          H = 1.0 / (params.penalty.P(0, 0) * m);
        }
        z[0] = std::log(H);
        break;
      }
      case PenaltyKind::info_scaled: {
        const double h = params.scalar_h ? *params.scalar_h : params.penalty.h;
        if (!(h > 0.0)) throw ConfigError("Transform::inverse(): missing info-scaled h");
        z[0] = std::log(h);
        break;
      }
      case PenaltyKind::lyapunov:
        z.head(n_penalty_) = log_chol_coords(params.penalty.delta, k_);
        break;
      case PenaltyKind::static_full:
        z.head(n_penalty_) = log_chol_coords(params.penalty.P, k_);
        break;
    }
  }

  // Omega block.
  const bool positive_omega =
      config_.constraint_mode == Mode::positive_diagonal ||
      model_.domain().kind == DomainKind::positive;
  for (int i = 0; i < n_omega_; ++i) {
    const double w = params.prediction.omega[i];
    z[n_penalty_ + i] = positive_omega ? std::log(w) : w;
  }

  // Phi block.
  const int phi_off = n_penalty_ + n_omega_;
  auto phi_coord = [&](double value) {
    return config_.constraint_mode == Mode::unconstrained
               ? atanh_clamped(value / kPhiScale)
               : atanh_clamped((2.0 * value - 1.0) / kPhiScale);
  };
  for (int i = 0; i < n_phi_; ++i) z[phi_off + i] = phi_coord(params.prediction.phi(i, i));

  // Shape block.
  {
    const auto entries = psi_entries(model_);
    int pos = phi_off + n_phi_;
    for (int idx : psi_indices_) {
      bool nu_branch = false;
      for (const PsiEntry& e : entries) {
        if (e.index == idx) nu_branch = e.nu_minus_two;
      }
      const double v = psi[idx];
      z[pos++] = nu_branch ? std::log(v - 2.0) : std::log(v);
    }
  }

  if (n_init_ > 0) {
    if (!params.init) throw ConfigError("Transform::inverse(): init level missing");
    z.tail(n_init_) = *params.init;
  }
  return z;
}

std::map<std::string, double> Transform::named_values(const StaticParams& params) const {
  std::map<std::string, double> out;
  int pos = 0;
  const Vector z = inverse(params);  // reuse the layout bookkeeping

  // Penalty.
  if (n_penalty_ > 0) {
    if (config_.penalty_kind == PenaltyKind::scalar_h ||
        config_.penalty_kind == PenaltyKind::info_scaled) {
      out["H"] = std::exp(z[0]);
      pos = 1;
    } else {
      for (int i = 0; i < n_penalty_; ++i) out[names_[i]] = z[i];
      pos = n_penalty_;
    }
  }
  for (int i = 0; i < n_omega_; ++i, ++pos) {
    out[names_[pos]] = params.prediction.omega[i];
  }
  for (int i = 0; i < n_phi_; ++i, ++pos) {
    out[names_[pos]] = config_.constraint_mode == PredictionSpec::ConstraintMode::convex_combination
                           ? params.prediction.phi(0, 0)
                           : params.prediction.phi(i, i);
  }
  const Vector psi = params.psi.size() > 0 ? params.psi : model_.shape();
  for (int idx : psi_indices_) {
    out[names_[pos++]] = psi[idx];
  }
  if (n_init_ > 0 && params.init) {
    for (int i = 0; i < k_; ++i, ++pos) out[names_[pos]] = (*params.init)[i];
  }
  return out;
}

Transform default_transform(const DensityModel& model, const FitConfig& config) {
  return Transform(model, config);
}

double neg_avg_loglik(const Vector& xi_unconstrained, const DensityModel& model,
                      const Matrix& data, const Matrix& exo, const FitConfig& config) {
  const double penalty_value = config.divergence_penalty;
  try {
    const Transform transform(model, config);
    const StaticParams statics = transform.forward(xi_unconstrained);
    FilterOptions opts;
    opts.mode = config.mode;
    opts.solver = config.solver;
    opts.overflow_guard = config.overflow_guard;
    const FilterPath path = run_filter(model, data, exo, statics, opts);
    if (path.diverged || !std::isfinite(path.total_loglik)) return penalty_value;
    return -path.total_loglik / static_cast<double>(data.rows());
  } catch (const Error&) {
    return penalty_value;
  }
}

namespace {

/// Sensible generic default start in constrained space: moderate learning
/// rate, persistent mean-reversion, level at zero (or one on positive
/// domains), family default shapes.
Vector default_start_coords(const DensityModel& model, const FitConfig& config,
                            const Transform& transform) {
  using Mode = PredictionSpec::ConstraintMode;
  const int k = model.param_dim();
  Vector z = Vector::Zero(transform.dim());
  int pos = 0;
  const bool h_kind = config.penalty_kind == PenaltyKind::scalar_h ||
                      config.penalty_kind == PenaltyKind::info_scaled;
  if (h_kind) {
    if (!config.pin_h) z[pos++] = std::log(0.1);
  } else {
    // log-Cholesky of 0.1·I: diagonal logs at ½·log 0.1, off-diagonals zero.
    for (int j = 0; j < k; ++j) {
      z[pos++] = 0.5 * std::log(0.1);
      for (int i = j + 1; i < k; ++i) z[pos++] = 0.0;
    }
  }
  if (config.constraint_mode != Mode::identity && !config.pin_omega) {
    // exp(0)=1 on positive scales, 0 otherwise: both valid levels.
    pos += k;
  }
  if (config.constraint_mode != Mode::identity && !config.pin_phi) {
    const int n_phi = config.constraint_mode == Mode::convex_combination ? 1 : k;
    const double target = config.constraint_mode == Mode::unconstrained
                              ? std::atanh(0.9 / kPhiScale)
                              : std::atanh((2.0 * 0.9 - 1.0) / kPhiScale);
    for (int i = 0; i < n_phi; ++i) z[pos++] = target;
  }
  // Shape and init coordinates stay at zero (κ=1, σ=1, υ=1, ν=3 on the
  // variance-targeted branch, ν=1 for the location-t branch, init=0).
  return z;
}

struct BfgsOutcome {
  Vector z;
  double f = 0.0;
  int iterations = 0;
  int evals = 0;
  bool converged = false;
  std::string note;
};

BfgsOutcome minimize_bfgs(const std::function<double(const Vector&)>& F, Vector z0,
                          const FitConfig& config) {
  const int n = static_cast<int>(z0.size());
  BfgsOutcome out;
  out.z = z0;
  out.f = F(z0);
  out.evals = 1;

  auto gradient = [&](const Vector& z) {
    Vector g(n);
    for (int i = 0; i < n; ++i) {
      const double h = config.fd_step * (1.0 + std::abs(z[i]));
      Vector zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fp = F(zp);
      const double fm = F(zm);
      out.evals += 2;
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  };

  if (out.f >= config.divergence_penalty) {
    out.note = "start diverged";
    return out;
  }
  if (n == 0) {
    out.converged = true;
    out.note = "nothing to estimate";
    return out;
  }

  Matrix B = Matrix::Identity(n, n);  // inverse-Hessian approximation
  Vector g = gradient(out.z);

  for (int iter = 0; iter < config.max_iters; ++iter) {
    out.iterations = iter + 1;
    if (!g.allFinite()) {
      out.note = "non-finite gradient";
      break;
    }
    Vector d = -(B * g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      B = Matrix::Identity(n, n);
      d = -g;
      slope = -g.squaredNorm();
      if (!(slope < 0.0)) {
        out.converged = true;  // zero gradient
        out.note = "gradient vanished";
        break;
      }
    }

    // Backtracking Armijo line search.
    double t = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Vector z_new;
    bool accepted = false;
    while (t >= 1e-12) {
      z_new = out.z + t * d;
      f_new = F(z_new);
      ++out.evals;
      if (f_new <= out.f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      out.converged = g.norm() <= 1e-5 * (1.0 + std::abs(out.f));
      out.note = out.converged ? "line search exhausted at stationarity"
                               : "line search failed";
      break;
    }

    const double f_prev = out.f;
    Vector g_new = gradient(z_new);
    const Vector s = z_new - out.z;
    const Vector yv = g_new - g;
    out.z = z_new;
    out.f = f_new;
    g = g_new;

    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const Vector By = B * yv;
      const double yBy = yv.dot(By);
      // BFGS inverse update.
      B += ((sy + yBy) / (sy * sy)) * (s * s.transpose()) -
           (By * s.transpose() + s * By.transpose()) / sy;
    } else {
      B = Matrix::Identity(n, n);
    }

    if (std::abs(f_prev - f_new) < config.tolerance * (1.0 + std::abs(f_prev))) {
      out.converged = true;
      out.note = "objective change below tolerance";
      break;
    }
  }
  if (out.note.empty()) out.note = "iteration limit reached";
  return out;
}

}  // namespace

std::pair<StaticParams, FitReport> fit(const DensityModel& model, const Matrix& data,
                                       const Matrix& exo, const FitConfig& config) {
  if (data.rows() < 50) {
    throw ConfigError("fit(): needs at least 50 observations, got " +
                      std::to_string(data.rows()));
  }
  if (config.starts < 1) throw ConfigError("fit(): starts must be positive");

  const Transform transform(model, config);
  auto F = [&](const Vector& z) { return neg_avg_loglik(z, model, data, exo, config); };

  Vector z_default;
  if (config.start) {
    if (config.start->size() != transform.dim()) {
      throw ConfigError("fit(): explicit start has the wrong length");
    }
    z_default = *config.start;
  } else {
    z_default = default_start_coords(model, config, transform);
  }

  FitReport report;
  report.names = transform.names();

  int total_evals = 0;
  for (int s = 0; s < config.starts; ++s) {
    Vector z0 = z_default;
    if (s > 0) {
      Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(s));
      for (int i = 0; i < z0.size(); ++i) {
        z0[i] += config.jitter * (2.0 * rng.uniform01() - 1.0);
      }
    }
    BfgsOutcome run = minimize_bfgs(F, z0, config);
    total_evals += run.evals;

    StartResult record;
    record.z_start = z0;
    record.z_end = run.z;
    record.f_start = std::numeric_limits<double>::quiet_NaN();
    record.f_end = run.f;
    record.iterations = run.iterations;
    record.converged = run.converged;
    record.note = run.note;
    report.starts.push_back(std::move(record));

    if (run.f < config.divergence_penalty &&
        (report.best_start < 0 || run.f < report.starts[report.best_start].f_end)) {
      report.best_start = s;
    }
  }
  report.function_evals = total_evals;

  if (report.best_start < 0) {
    throw AllStartsFailed("fit(): every start diverged or failed to reach a finite objective");
  }

  const StartResult& best = report.starts[report.best_start];
  report.z_hat = best.z_end;
  report.objective = best.f_end;
  report.total_loglik = -best.f_end * static_cast<double>(data.rows());
  report.converged = best.converged;

  StaticParams statics = transform.forward(report.z_hat);
  report.estimates = transform.named_values(statics);
  return {statics, report};
}

}  // namespace isdf
