#include "isdf/update.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>

namespace isdf {

namespace {

// ---------------------------------------------------------------------------
// Gauss–Legendre nodes on [-1, 1], cached per order.
// ---------------------------------------------------------------------------

struct GlRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const GlRule& gauss_legendre(int n) {
  static std::map<int, GlRule> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GlRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Chebyshev-based initial guess, then Newton on P_n(x) = 0.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[static_cast<std::size_t>(i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

double spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  double rho = 0.0;
  for (int i = 0; i < a.rows(); ++i) rho = std::max(rho, std::abs(es.eigenvalues()[i]));
  return rho;
}

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

void require_spd(const Matrix& p, const char* who) {
  if (p.rows() != p.cols()) throw ShapeError(std::string(who) + ": matrix must be square");
  if ((p - p.transpose()).norm() > 1e-10 * (1.0 + p.norm())) {
    throw ShapeError(std::string(who) + ": matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(p));
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    throw ShapeError(std::string(who) + ": matrix must be positive definite");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Lyapunov equation P = Φ'PΦ + Δ
// ---------------------------------------------------------------------------

Matrix lyapunov_solve(const Matrix& phi, const Matrix& delta) {
  const int k = static_cast<int>(phi.rows());
  if (phi.cols() != k || delta.rows() != k || delta.cols() != k) {
    throw ShapeError("lyapunov_solve(): phi and delta must be square with equal size");
  }
  if (spectral_radius(phi) >= 1.0 - 1e-12) {
    throw SpectralRadiusError("lyapunov_solve(): spectral radius of phi must be below one");
  }
  const Matrix d = symmetrized(delta);

  if (k <= 8) {
    // vec(P) = (I − Φᵀ⊗Φᵀ)⁻¹ vec(Δ)
    const int kk = k * k;
    Matrix a = Matrix::Identity(kk, kk);
    const Matrix pt = phi.transpose();
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        for (int r = 0; r < k; ++r)
          for (int c = 0; c < k; ++c) a(i * k + r, j * k + c) -= pt(i, j) * pt(r, c);
    Vector vec_d(kk);
    for (int j = 0; j < k; ++j)
      for (int r = 0; r < k; ++r) vec_d[j * k + r] = d(r, j);
    const Vector vec_p = a.partialPivLu().solve(vec_d);
    Matrix p(k, k);
    for (int j = 0; j < k; ++j)
      for (int r = 0; r < k; ++r) p(r, j) = vec_p[j * k + r];
    return symmetrized(p);
  }

  // Doubling on P = Σ (Φ')^m Δ Φ^m.
  Matrix s = d;
  Matrix a = phi;
  for (int iter = 0; iter < 200; ++iter) {
    const Matrix inc = a.transpose() * s * a;
    s += inc;
    if (inc.norm() <= 1e-15 * s.norm()) break;
    a = a * a;
  }
  return symmetrized(s);
}

// ---------------------------------------------------------------------------
// Scaling conventions
// ---------------------------------------------------------------------------

ScalingSpec ScalingSpec::default_for(const DensityModel& model) {
  return model.family() == Family::t_location ? t_location_scaled() : raw();
}

double ScalingSpec::factor(const DensityModel& model) const {
  if (kind == Kind::raw) return 1.0;
  if (model.family() != Family::t_location) {
    throw ConfigError("ScalingSpec: t_location_scaled applies only to the t-location family");
  }
  const double sigma = model.shape()[0], nu = model.shape()[1];
  return nu * sigma * sigma / (nu + 1.0);
}

Vector scaled_score(const DensityModel& model, const Vector& theta, const Vector& y,
                    const ScalingSpec& scaling, const Vector& exo) {
  return scaling.factor(model) * model.score(theta, y, exo);
}

// ---------------------------------------------------------------------------
// PenaltySpec
// ---------------------------------------------------------------------------

PenaltySpec PenaltySpec::static_matrix(const Matrix& p) {
  require_spd(p, "PenaltySpec::static_matrix");
  PenaltySpec spec;
  spec.kind = Kind::static_matrix;
  spec.P = symmetrized(p);
  return spec;
}

PenaltySpec PenaltySpec::static_scalar(double p) {
  Matrix m(1, 1);
  m << p;
  return static_matrix(m);
}

PenaltySpec PenaltySpec::lyapunov(const Matrix& delta, const Matrix& phi) {
  require_spd(delta, "PenaltySpec::lyapunov (delta)");
  PenaltySpec spec;
  spec.kind = Kind::lyapunov;
  spec.delta = symmetrized(delta);
  spec.phi = phi;
  spec.P = lyapunov_solve(phi, spec.delta);
  return spec;
}

PenaltySpec PenaltySpec::info_scaled(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ConfigError("PenaltySpec::info_scaled: h must be positive and finite");
  }
  PenaltySpec spec;
  spec.kind = Kind::info_scaled;
  spec.h = h;
  return spec;
}

Matrix PenaltySpec::resolve(const Vector& theta_pred) const {
  if (kind != Kind::info_scaled) return P;
  if (theta_pred.size() != 1) {
    throw ConfigError("PenaltySpec::info_scaled applies to scalar parameters only");
  }
  Matrix p(1, 1);
  p << std::exp(0.5 * theta_pred[0]) / h;
  return p;
}

std::string solver_kind_id(SolverKind kind) {
  switch (kind) {
    case SolverKind::closed_form: return "closed_form";
    case SolverKind::bisection: return "bisection";
    case SolverKind::newton_linesearch: return "newton_linesearch";
    case SolverKind::projected_newton: return "projected_newton";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Generic implicit update
// ---------------------------------------------------------------------------

namespace {

struct Objective {
  const DensityModel& model;
  const Vector& y;
  const Vector& theta_pred;
  const Matrix& P;
  const Vector& exo;

  double operator()(const Vector& theta) const {
    const Vector d = theta - theta_pred;
    return model.log_density(theta, y, exo) - 0.5 * d.dot(P * d);
  }
};

UpdateResult trivial_result(const DensityModel& model, const Vector& theta_pred,
                            double objective_at_pred) {
  UpdateResult res;
  res.theta_upd = ParamVector(theta_pred, model.domain());
  res.objective_gain = 0.0;
  res.loglik_gain = 0.0;
  res.iterations = 0;
  res.solver = SolverKind::closed_form;
  res.stationary_points.emplace_back(theta_pred, objective_at_pred);
  return res;
}

/// Exact maximizer for piecewise-linear (quantile) log densities with a
/// diagonal penalty: the objective separates per level into a concave
/// piecewise-quadratic whose maximum has a closed form.
UpdateResult quantile_prox(const DensityModel& model, const Vector& y,
                           const Vector& theta_pred, const Matrix& P, const Vector& exo) {
  const int levels = model.param_dim();
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) {
      if (i != j && std::abs(P(i, j)) > 1e-14 * (1.0 + P.norm())) {
        throw ConfigError(
            "isd_update: quantile battery requires a diagonal penalty "
            "(levels are coupled only through the data)");
      }
    }
  }
  const double sigma = model.shape()[0];
  Vector upd(levels);
  for (int l = 0; l < levels; ++l) {
    const double tau = model.shape()[l + 1];
    const double q = theta_pred[l];
    const double h = 1.0 / P(l, l);
    if (y[0] > q) {
      upd[l] = std::min(y[0], q + h * tau / sigma);
    } else {
      upd[l] = std::max(y[0], q - h * (1.0 - tau) / sigma);
    }
  }
  const Objective f{model, y, theta_pred, P, exo};
  UpdateResult res;
  res.theta_upd = ParamVector(upd, model.domain());
  res.objective_gain = f(upd) - f(theta_pred);
  res.loglik_gain = model.log_density(upd, y, exo) - model.log_density(theta_pred, y, exo);
  res.iterations = 0;
  res.solver = SolverKind::closed_form;
  res.stationary_points.emplace_back(upd, f(upd));
  return res;
}

struct ScalarRootOutcome {
  double root = 0.0;
  int iterations = 0;
  bool mostly_bisection = false;
};

/// Safeguarded Newton on the decreasing FOC residual r over a bracket
/// [lo, hi] with r(lo) ≥ 0 ≥ r(hi).
template <typename R, typename Rp>
ScalarRootOutcome solve_decreasing(R r, Rp rp, double lo, double hi, double start,
                                   double tol, const SolverOptions& opts) {
  ScalarRootOutcome out;
  double x = std::clamp(start, lo, hi);
  int newton_used = 0, bisect_used = 0;
  double rx = r(x);
  for (int iter = 0; iter < opts.max_newton_iters; ++iter) {
    ++out.iterations;
    if (std::abs(rx) <= tol) {
      out.root = x;
      out.mostly_bisection = bisect_used > newton_used;
      return out;
    }
    if (rx > 0.0) lo = x; else hi = x;
    const double d = rp(x);
    double next;
    if (std::isfinite(d) && d < 0.0) {
      next = x - rx / d;
      if (!(next > lo && next < hi)) {
        next = 0.5 * (lo + hi);
        ++bisect_used;
      } else {
        ++newton_used;
      }
    } else {
      next = 0.5 * (lo + hi);
      ++bisect_used;
    }
    x = next;
    rx = r(x);
  }
  for (int iter = 0; iter < opts.max_bisect_iters; ++iter) {
    ++out.iterations;
    if (std::abs(rx) <= tol || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                                             (1.0 + std::abs(lo) + std::abs(hi))) {
      out.root = x;
      out.mostly_bisection = true;
      return out;
    }
    if (rx > 0.0) lo = x; else hi = x;
    x = 0.5 * (lo + hi);
    rx = r(x);
  }
  if (std::abs(rx) <= tol) {
    out.root = x;
    out.mostly_bisection = true;
    return out;
  }
  throw MaxIterations("isd_update: FOC residual " + std::to_string(std::abs(rx)) +
                      " above tolerance " + std::to_string(tol) + " at best iterate " +
                      std::to_string(x));
}

/// Collect roots of r inside [a, b] by sign-change scanning plus bisection.
template <typename R, typename Rp>
std::vector<double> scan_roots(R r, Rp rp, double a, double b, int n_points, double tol,
                               const SolverOptions& opts, int* iterations) {
  std::vector<double> roots;
  if (!(b > a)) return roots;
  double prev_x = a;
  double prev_r = r(a);
  for (int i = 1; i < n_points; ++i) {
    const double x = a + (b - a) * i / (n_points - 1);
    const double rx = r(x);
    if (prev_r == 0.0) {
      roots.push_back(prev_x);
    } else if ((prev_r > 0.0 && rx < 0.0) || (prev_r < 0.0 && rx > 0.0)) {
      // Orient the bracket so the residual decreases across it.
      const double lo = prev_r > 0.0 ? prev_x : x;
      const double hi = prev_r > 0.0 ? x : prev_x;
      auto rr = [&](double t) { return prev_r > 0.0 ? r(t) : -r(t); };
      auto rrp = [&](double t) { return prev_r > 0.0 ? rp(t) : -rp(t); };
      const double flo = std::min(lo, hi), fhi = std::max(lo, hi);
      ScalarRootOutcome o = solve_decreasing(rr, rrp, flo, fhi, 0.5 * (flo + fhi), tol, opts);
      *iterations += o.iterations;
      roots.push_back(o.root);
    }
    prev_x = x;
    prev_r = rx;
  }
  if (prev_r == 0.0) roots.push_back(prev_x);
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end(),
                          [&](double u, double v) {
                            return std::abs(u - v) <= 1e-10 * (1.0 + std::abs(u));
                          }),
              roots.end());
  return roots;
}

UpdateResult finalize_from_candidates(const DensityModel& model, const Vector& y,
                                      const Vector& theta_pred, const Matrix& P,
                                      const Vector& exo,
                                      const std::vector<Vector>& candidates, int iterations,
                                      SolverKind solver) {
  const Objective f{model, y, theta_pred, P, exo};
  UpdateResult res;
  res.iterations = iterations;
  res.solver = solver;
  double best = -kInfinity;
  for (const Vector& c : candidates) {
    const double fc = f(c);
    res.stationary_points.emplace_back(c, fc);
    best = std::max(best, fc);
  }
  // Deterministic tie-break: among near-equal objectives, stay closest to
  // the prediction.
  int best_idx = -1;
  double best_dist = kInfinity;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (res.stationary_points[i].second < best - 1e-12) continue;
    const double dist = (candidates[i] - theta_pred).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best_idx = static_cast<int>(i);
    }
  }
  const Vector& winner = candidates[static_cast<std::size_t>(best_idx)];
  res.theta_upd = ParamVector(winner, model.domain());
  res.objective_gain = f(winner) - f(theta_pred);
  res.loglik_gain =
      model.log_density(winner, y, exo) - model.log_density(theta_pred, y, exo);
  return res;
}

UpdateResult scalar_isd_update(const DensityModel& model, const Vector& y,
                               const Vector& theta_pred, const Matrix& P, const Vector& exo,
                               const SolverOptions& opts) {
  const double tp = theta_pred[0];
  const double p = P(0, 0);
  const double tol = opts.foc_tol * (1.0 + std::abs(p * tp));
  const Objective f{model, y, theta_pred, P, exo};

  double s_pred;
  try {
    s_pred = model.score1(tp, y);
  } catch (const NonDifferentiableError&) {
    // Prediction sits exactly on a density cusp (GED with υ < 1 at y):
    // the cusp is the joint maximizer of density and penalty.
    return trivial_result(model, theta_pred, f(theta_pred));
  }

  const ConcavityInfo ci = model.concavity_info();
  const bool effectively_concave =
      ci.log_concave || (ci.hessian_upper_bound.has_value() && p > *ci.hessian_upper_bound);
  const bool corr = model.family() == Family::gaussian_correlation ||
                    model.family() == Family::t_correlation;

  // A vanishing score solves the FOC at the prediction.  For correlation
  // families below the concavity threshold that point may be a local
  // minimum, so the global scan below must still run.
  if (std::abs(s_pred) <= tol && (effectively_concave || !corr)) {
    return trivial_result(model, theta_pred, f(theta_pred));
  }

  // GED with υ = 1: piecewise-linear score in the error; the maximizer is a
  // soft shift of the prediction toward the observation, capped at it.
  if (model.family() == Family::ged_location && model.shape()[1] == 1.0) {
    const double sigma = model.shape()[0];
    const double e = y[0] - tp;
    const double shift = std::min(std::abs(e), 1.0 / (sigma * p));
    Vector upd(1);
    upd << tp + std::copysign(shift, e);
    return finalize_from_candidates(model, y, theta_pred, P, exo, {upd}, 0,
                                    SolverKind::closed_form);
  }

  auto r = [&](double th) { return model.score1(th, y) - p * (th - tp); };
  auto rp = [&](double th) { return model.hessian1(th, y) - p; };

  if (effectively_concave) {
    // r is strictly decreasing, r(θp) = s_pred; start from the explicit step
    // θp + s/p and expand geometrically until the root is bracketed (for a
    // concave log density the first endpoint already brackets it).
    double width = s_pred / p;
    double far = tp + width;
    int guard = 0;
    while (guard++ < 200) {
      const double r_far = r(far);
      if (s_pred > 0.0 ? r_far <= 0.0 : r_far >= 0.0) break;
      width *= 2.0;
      far = tp + width;
    }
    if (guard > 200) {
      throw MaxIterations("isd_update: failed to bracket the FOC root");
    }
    // Either way the residual is positive at the left end and negative at
    // the right end: for s_pred > 0 the bracket is [θp, far], otherwise
    // [far, θp] with r(far) ≥ 0 by the expansion above.
    const double lo = std::min(tp, far), hi = std::max(tp, far);
    ScalarRootOutcome o = solve_decreasing(r, rp, lo, hi, 0.5 * (lo + hi), tol, opts);
    Vector upd(1);
    upd << o.root;
    return finalize_from_candidates(
        model, y, theta_pred, P, exo, {upd}, o.iterations,
        o.mostly_bisection ? SolverKind::bisection : SolverKind::newton_linesearch);
  }

  if (!opts.multistart) {
    throw NonConcaveUnresolved(
        "isd_update: family is not log-concave and the penalty does not dominate its "
        "curvature; enable multistart global search");
  }

  // Global search: all stationary points lie where the score and the penalty
  // pull in the same direction.  For location-type families that confines
  // them to the segment between prediction and observation; for correlation
  // families the effective range of the link is scanned.
  const bool cusp_family =
      model.family() == Family::ged_location && model.shape()[1] < 1.0;
  int iterations = 0;
  std::vector<Vector> candidates;

  double a, b;
  if (corr) {
    a = std::min(tp, -16.0) - 1.0;
    b = std::max(tp, 16.0) + 1.0;
  } else {
    a = std::min(tp, y[0]);
    b = std::max(tp, y[0]);
    if (cusp_family) {
      const double eps = 1e-9 * (1.0 + std::abs(y[0]));
      if (y[0] >= b - 0.0) b = std::max(a, y[0] - eps);
      if (y[0] <= a + 0.0) a = std::min(b, y[0] + eps);
    }
  }

  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> roots = scan_roots(r, rp, a, b, 257, tol, opts, &iterations);
    for (double root : roots) {
      Vector v(1);
      v << root;
      candidates.push_back(v);
    }
    if (cusp_family) {
      Vector v(1);
      v << y[0];
      candidates.push_back(v);
    }
    if (candidates.empty()) {
      const double width = b - a;
      a -= width;
      b += width;
      continue;
    }
    UpdateResult res = finalize_from_candidates(model, y, theta_pred, P, exo, candidates,
                                                iterations, SolverKind::bisection);
    if (res.objective_gain >= -1e-12) return res;
    // The best stationary point found is worse than the prediction: the scan
    // missed the global maximizer.  Widen once, then give up honestly.
    candidates.clear();
    const double width = b - a;
    a -= width;
    b += width;
  }
  throw NonConcaveUnresolved(
      "isd_update: global search found no stationary point improving on the prediction");
}

UpdateResult multivariate_isd_update(const DensityModel& model, const Vector& y,
                                     const Vector& theta_pred, const Matrix& P,
                                     const Vector& exo, const SolverOptions& opts) {
  const int k = model.param_dim();
  const ParamDomain domain = model.domain();
  const Objective f{model, y, theta_pred, P, exo};
  const double tol = opts.foc_tol * (1.0 + (P * theta_pred).norm());
  const ConcavityInfo ci = model.concavity_info();

  const Vector g_pred = model.score(theta_pred, y, exo);
  if (g_pred.norm() <= tol) {
    return trivial_result(model, theta_pred, f(theta_pred));
  }

  // Clip a proposal into the interior, pulling back toward the prediction.
  auto clip_into_domain = [&](const Vector& target) {
    if (domain.contains(target)) return target;
    const Vector step = target - theta_pred;
    const double frac = domain.max_step_fraction(theta_pred, step);
    return Vector(theta_pred + 0.9 * std::min(1.0, frac) * step);
  };

  // Objective at a trial point; an evaluation failure (special-function
  // overflow far out, a rejection at the numerical edge of the domain) just
  // means the line search must not go there.
  auto f_or_neg_inf = [&](const Vector& theta) {
    try {
      const double v = f(theta);
      return std::isfinite(v) ? v : -kInfinity;
    } catch (const std::exception&) {
      return -kInfinity;
    }
  };

  std::vector<Vector> starts;
  starts.push_back(theta_pred);
  if (!ci.log_concave) {
    if (!opts.multistart) {
      throw NonConcaveUnresolved(
          "isd_update: family is not log-concave; enable multistart global search");
    }
    const Vector esd_point = clip_into_domain(theta_pred + P.inverse() * g_pred);
    starts.push_back(esd_point);
    starts.push_back(0.5 * (theta_pred + esd_point));
  }

  struct Converged {
    Vector theta;
    int iterations;
    bool clipped;
  };
  std::vector<Converged> found;
  int total_iterations = 0;

  for (const Vector& start : starts) {
    Vector x = start;
    bool clipped = false;
    int tiny_clipped_steps = 0;
    bool converged = false;
    int iters = 0;
    for (; iters < opts.max_newton_iters; ++iters) {
      const Vector g = model.score(x, y, exo) - P * (x - theta_pred);
      if (g.norm() <= tol) {
        converged = true;
        break;
      }
      Matrix m = P - model.hessian(x, y, exo);
      Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
      Vector lam = es.eigenvalues();
      // Saddle-free modification: reflect negative curvature and floor the
      // spectrum relative to its scale, so steps stay bounded even where the
      // penalized objective is locally non-concave.
      const double floor_lam = std::max(1e-10, 1e-3 * lam.cwiseAbs().maxCoeff());
      for (int i = 0; i < k; ++i) lam[i] = std::max(std::abs(lam[i]), floor_lam);
      const Matrix v = es.eigenvectors();
      Vector step = v * (v.transpose() * g).cwiseQuotient(lam);

      const double frac = domain.max_step_fraction(x, step);
      if (frac <= 1.0) {
        step *= 0.9 * frac;
        clipped = true;
      }
      // Armijo backtracking on the penalized objective (ascent).  Once the
      // predicted gain drops below the objective's rounding noise the
      // comparison is meaningless and backtracking would stall short of the
      // FOC tolerance; the (curvature-floored) Newton step is tiny and
      // reliable there, so take it whole.
      const double fx = f_or_neg_inf(x);
      if (fx == -kInfinity) break;  // unusable start
      const double slope = g.dot(step);
      const bool gain_below_noise = slope <= 1e-12 * (1.0 + std::abs(fx)) &&
                                    step.norm() <= 1e-5 * (1.0 + x.norm());
      double t = 1.0;
      if (!gain_below_noise) {
        while (t >= 1e-14 && f_or_neg_inf(x + t * step) < fx + 1e-4 * t * slope) t *= 0.5;
        if (t < 1e-14) break;  // no ascent possible from here
        if (clipped && (t * step).norm() <= 1e-13 * (1.0 + x.norm())) {
          if (++tiny_clipped_steps >= 5) {
            throw NoInteriorSolution(
                "isd_update: iterates driven to the boundary of the parameter domain");
          }
        } else {
          tiny_clipped_steps = 0;
        }
      }
      x += t * step;
    }
    total_iterations += iters;
    if (converged) {
      bool duplicate = false;
      for (const Converged& c : found) {
        if ((c.theta - x).norm() <= 1e-8 * (1.0 + x.norm())) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) found.push_back({x, iters, clipped});
    }
    if (ci.log_concave && converged) break;  // unique stationary point
  }

  if (found.empty()) {
    if (ci.log_concave) {
      throw MaxIterations("isd_update: Newton iteration did not reach the FOC tolerance");
    }
    throw NonConcaveUnresolved("isd_update: multi-start search found no stationary point");
  }

  std::vector<Vector> candidates;
  candidates.reserve(found.size());
  bool winner_clipped = false;
  for (const Converged& c : found) candidates.push_back(c.theta);
  UpdateResult res = finalize_from_candidates(model, y, theta_pred, P, exo, candidates,
                                              total_iterations, SolverKind::newton_linesearch);
  for (const Converged& c : found) {
    if ((c.theta - res.theta_upd.values).norm() <= 1e-12 * (1.0 + c.theta.norm())) {
      winner_clipped = c.clipped;
    }
  }
  res.solver = winner_clipped ? SolverKind::projected_newton : SolverKind::newton_linesearch;
  return res;
}

}  // namespace

UpdateResult isd_update(const DensityModel& model, const Vector& y,
                        const ParamVector& theta_pred, const PenaltySpec& penalty,
                        const Vector& exo, const SolverOptions& opts) {
  if (!model.domain().contains(theta_pred.values)) {
    throw DomainError("isd_update: theta_pred outside the parameter domain");
  }
  const Matrix P = penalty.resolve(theta_pred.values);
  if (P.rows() != model.param_dim() || P.cols() != model.param_dim()) {
    throw ShapeError("isd_update: penalty dimension does not match the parameter");
  }
  require_spd(P, "isd_update (penalty)");

  if (model.piecewise_linear()) {
    return quantile_prox(model, y, theta_pred.values, P, exo);
  }
  if (model.param_dim() == 1) {
    return scalar_isd_update(model, y, theta_pred.values, P, exo, opts);
  }
  return multivariate_isd_update(model, y, theta_pred.values, P, exo, opts);
}

EsdResult esd_update(const DensityModel& model, const Vector& y,
                     const ParamVector& theta_pred, const Matrix& learning_rate,
                     const Vector& exo, const ScalingSpec& scaling) {
  if (!model.domain().contains(theta_pred.values)) {
    throw DomainError("esd_update: theta_pred outside the parameter domain");
  }
  if (learning_rate.rows() != model.param_dim() ||
      learning_rate.cols() != model.param_dim()) {
    throw ShapeError("esd_update: learning-rate dimension does not match the parameter");
  }
  const Vector g = model.score(theta_pred.values, y, exo);
  EsdResult res;
  res.theta_upd = theta_pred.values + learning_rate * (scaling.factor(model) * g);
  res.out_of_domain = !model.domain().contains(res.theta_upd);
  return res;
}

Vector isd_update_regression(double y, const Vector& x, const Vector& beta_pred,
                             const Matrix& H, double sigma2) {
  if (!(sigma2 > 0.0)) throw ShapeError("isd_update_regression: sigma2 must be positive");
  if (x.size() != beta_pred.size() || H.rows() != x.size() || H.cols() != x.size()) {
    throw ShapeError("isd_update_regression: dimension mismatch");
  }
  const double xhx = x.dot(H * x);
  const double resid = y - beta_pred.dot(x);
  return beta_pred + (sigma2 / (sigma2 + xhx)) * (H * x) * (resid / sigma2);
}

Vector isd_update_quantile(double y, const Vector& q_pred, const Vector& taus, double H,
                           double sigma) {
  const int levels = static_cast<int>(q_pred.size());
  if (taus.size() != levels) throw ShapeError("isd_update_quantile: taus/q_pred mismatch");
  if (!(H > 0.0) || !(sigma > 0.0)) {
    throw ShapeError("isd_update_quantile: H and sigma must be positive");
  }
  double prev_tau = 0.0;
  for (int l = 0; l < levels; ++l) {
    if (!(taus[l] > prev_tau && taus[l] < 1.0)) {
      throw ShapeError("isd_update_quantile: taus must be strictly increasing inside (0,1)");
    }
    prev_tau = taus[l];
    if (l > 0 && !(q_pred[l] > q_pred[l - 1])) {
      throw CrossedPredictions("isd_update_quantile: predictions must be strictly increasing");
    }
  }
  Vector upd(levels);
  for (int l = 0; l < levels; ++l) {
    if (y > q_pred[l]) {
      upd[l] = std::min(y, q_pred[l] + H * taus[l] / sigma);
    } else {
      upd[l] = std::max(y, q_pred[l] - H * (1.0 - taus[l]) / sigma);
    }
  }
  return upd;
}

UpdateResult isd_update_t_location(double y, double theta_pred, double H, double sigma,
                                   double nu) {
  if (!(H > 0.0) || !(sigma > 0.0) || !(nu > 0.0)) {
    throw ShapeError("isd_update_t_location: H, sigma, nu must be positive");
  }
  const DensityModel model = DensityModel::t_location(sigma, nu);
  Vector yv(1);
  yv << y;
  Vector pred(1);
  pred << theta_pred;
  const double penalty = (nu + 1.0) / (nu * sigma * sigma * H);
  Matrix P(1, 1);
  P << penalty;
  const Objective f{model, yv, pred, P, Vector()};

  const double e = y - theta_pred;
  if (e == 0.0) {
    return trivial_result(model, pred, f(pred));
  }

  // Roots of A·w(1−w)² + w − H(1−w) = 0 with A = e²/(νσ²), i.e. of
  // A·w³ − 2A·w² + (A+1+H)·w − H = 0; all real roots lie in (0, H/(1+H)].
  const long double A = static_cast<long double>(e) * e / (static_cast<long double>(nu) * sigma * sigma);
  const long double Hl = H;
  auto cubic = [&](long double w) {
    return ((A * w - 2.0L * A) * w + (A + 1.0L + Hl)) * w - Hl;
  };
  auto cubic_d = [&](long double w) {
    return (3.0L * A * w - 4.0L * A) * w + (A + 1.0L + Hl);
  };

  // Depressed cubic t³ + pt + q with w = t + 2/3.
  const long double B = -2.0L, C = (A + 1.0L + Hl) / A, D = -Hl / A;
  const long double pc = C - B * B / 3.0L;
  const long double qc = 2.0L * B * B * B / 27.0L - B * C / 3.0L + D;
  const long double disc = qc * qc / 4.0L + pc * pc * pc / 27.0L;

  std::vector<long double> roots;
  if (disc > 0.0L) {
    const long double sq = std::sqrt(disc);
    const long double u = std::cbrt(-qc / 2.0L + sq);
    const long double v = std::cbrt(-qc / 2.0L - sq);
    roots.push_back(u + v - B / 3.0L);
  } else {
    const long double m = 2.0L * std::sqrt(-pc / 3.0L);
    const long double arg = std::clamp(3.0L * qc / (pc * m), -1.0L, 1.0L);
    const long double phi = std::acos(arg) / 3.0L;
    for (int j = 0; j < 3; ++j) {
      roots.push_back(m * std::cos(phi - 2.0L * M_PI * j / 3.0L) - B / 3.0L);
    }
  }

  const double w_cap = H / (1.0 + H);
  std::vector<double> ws;
  for (long double w : roots) {
    for (int polish = 0; polish < 2; ++polish) {
      const long double d = cubic_d(w);
      if (d != 0.0L) w -= cubic(w) / d;
    }
    const double wd = static_cast<double>(w);
    if (wd > 0.0 && wd < 1.0) ws.push_back(std::min(wd, w_cap));
  }
  std::sort(ws.begin(), ws.end());
  ws.erase(std::unique(ws.begin(), ws.end(),
                       [](double u, double v) { return std::abs(u - v) <= 1e-12; }),
           ws.end());
  if (ws.empty()) {
    // Fall back to bisection: the cubic is negative at 0 and nonnegative at
    // the cap, so a root is always bracketed.
    long double lo = 0.0L, hi = w_cap;
    for (int i = 0; i < 200; ++i) {
      const long double mid = 0.5L * (lo + hi);
      if (cubic(mid) < 0.0L) lo = mid; else hi = mid;
    }
    ws.push_back(static_cast<double>(0.5L * (lo + hi)));
  }

  std::vector<Vector> candidates;
  for (double w : ws) {
    Vector v(1);
    v << theta_pred + w * e;
    candidates.push_back(v);
  }
  UpdateResult res = finalize_from_candidates(model, yv, pred, P, Vector(), candidates, 2,
                                              SolverKind::closed_form);
  return res;
}

Matrix compute_average_hessian(const DensityModel& model, const Vector& y,
                               const ParamVector& theta_a, const ParamVector& theta_b,
                               int n_nodes, const Vector& exo) {
  if (n_nodes < 1) throw ConfigError("compute_average_hessian: need at least one node");
  if (!model.domain().contains(theta_a.values) || !model.domain().contains(theta_b.values)) {
    throw DomainError("compute_average_hessian: endpoints must lie inside the domain");
  }
  const GlRule& rule = gauss_legendre(n_nodes);
  const Vector diff = theta_b.values - theta_a.values;
  Matrix acc = Matrix::Zero(model.param_dim(), model.param_dim());
  for (int i = 0; i < n_nodes; ++i) {
    const double s = 0.5 * (rule.nodes[static_cast<std::size_t>(i)] + 1.0);
    const double w = 0.5 * rule.weights[static_cast<std::size_t>(i)];
    acc -= w * model.hessian(theta_a.values + s * diff, y, exo);
  }
  return acc;
}

}  // namespace isdf
