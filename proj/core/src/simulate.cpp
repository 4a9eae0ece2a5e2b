#include "isdf/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "isdf/update.hpp"

namespace isdf {

namespace {

double sign_wave(double x) { return x >= 0.0 ? 1.0 : -1.0; }

/// Unit-variance innovation draw.
double innovation_draw(Rng& rng, DgpSpec::Innovation kind, double nu0) {
  if (kind == DgpSpec::Innovation::gaussian) return rng.normal();
  return rng.student_t_unit_variance(nu0);
}

}  // namespace

DgpSpec DgpSpec::isd(StaticParams xi0, int T, std::uint64_t seed) {
  DgpSpec spec;
  spec.kind = Kind::isd_dgp;
  spec.xi0 = std::move(xi0);
  spec.T = T;
  spec.seed = seed;
  return spec;
}

DgpSpec DgpSpec::ar1(double omega0, double phi0, double sigma_eta, int T, std::uint64_t seed,
                     Innovation innovation, double nu0) {
  DgpSpec spec;
  spec.kind = Kind::ar1_state;
  spec.omega0 = omega0;
  spec.phi0 = phi0;
  spec.sigma_eta = sigma_eta;
  spec.T = T;
  spec.seed = seed;
  spec.innovation = innovation;
  spec.nu0 = nu0;
  return spec;
}

DgpSpec DgpSpec::square_wave(int T, std::uint64_t seed) {
  DgpSpec spec;
  spec.kind = Kind::square_wave_gamma;
  spec.T = T;
  spec.seed = seed;
  return spec;
}

DgpSpec DgpSpec::dirichlet_ar1(int T, std::uint64_t seed, Innovation innovation, double nu0) {
  DgpSpec spec;
  spec.kind = Kind::dirichlet_ar1;
  spec.omega0 = 0.1;
  spec.phi0 = 0.95;
  spec.sigma_eta = std::sqrt(0.195);
  spec.burn_in = 100;
  spec.T = T;
  spec.seed = seed;
  spec.innovation = innovation;
  spec.nu0 = nu0;
  return spec;
}

void DgpSpec::validate(const DensityModel& model) const {
  if (T < 1) throw ConfigError("DgpSpec: T must be positive");
  switch (kind) {
    case Kind::isd_dgp:
      if (xi0.penalty.dim() != model.param_dim() && !xi0.penalty.per_step()) {
        throw ConfigError("DgpSpec: xi0 penalty dimension does not match the model");
      }
      break;
    case Kind::ar1_state:
    case Kind::dirichlet_ar1:
      if (!(sigma_eta >= 0.0)) throw ConfigError("DgpSpec: sigma_eta must be nonnegative");
      if (!(std::abs(phi0) < 1.0)) throw ConfigError("DgpSpec: |phi0| must be below one");
      if (model.param_dim() != 1) {
        throw ConfigError("DgpSpec: AR(1) state designs use scalar-parameter families");
      }
      if (innovation == Innovation::student_t && !(nu0 > 2.0)) {
        throw ConfigError("DgpSpec: Student-t innovations need nu0 > 2 for unit variance");
      }
      if (kind == Kind::dirichlet_ar1 &&
          model.family() != Family::dirichlet_log_concentration) {
        throw ConfigError("DgpSpec: dirichlet_ar1 requires the Dirichlet family");
      }
      if (kind == Kind::dirichlet_ar1 && model.obs_dim() < 2) {
        throw ConfigError("DgpSpec: Dirichlet design needs at least two components");
      }
      break;
    case Kind::square_wave_gamma:
      if (model.family() != Family::gamma_two_param) {
        throw ConfigError("DgpSpec: square_wave_gamma requires the two-parameter Gamma family");
      }
      break;
  }
}

Vector draw_observation(const DensityModel& model, const Vector& theta, Rng& rng) {
  Vector y(model.obs_dim());
  const Vector& psi = model.shape();
  switch (model.family()) {
    case Family::poisson_log_intensity:
      y[0] = static_cast<double>(rng.poisson(std::exp(theta[0])));
      return y;
    case Family::negbin_log_intensity:
      y[0] = static_cast<double>(rng.negative_binomial(psi[0], std::exp(theta[0])));
      return y;
    case Family::exponential_log_intensity:
      // intensity (rate) exp(θ): mean exp(−θ)
      y[0] = rng.exponential(std::exp(theta[0]));
      return y;
    case Family::gamma_log_scale:
      y[0] = rng.gamma(psi[0], std::exp(theta[0]));
      return y;
    case Family::weibull_log_scale:
      y[0] = rng.weibull(std::exp(theta[0]), psi[0]);
      return y;
    case Family::gaussian_log_variance:
      y[0] = std::exp(0.5 * theta[0]) * rng.normal();
      return y;
    case Family::t_log_variance:
      // variance-targeted: conditional variance exp(θ)
      y[0] = std::exp(0.5 * theta[0]) * rng.student_t_unit_variance(psi[0]);
      return y;
    case Family::gaussian_correlation: {
      const double rho = std::tanh(0.5 * theta[0]);
      const double z1 = rng.normal(), z2 = rng.normal();
      y[0] = z1;
      y[1] = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
      return y;
    }
    case Family::t_correlation: {
      // unit-variance bivariate t with correlation tanh(θ/2)
      const double nu = psi[0];
      const double rho = std::tanh(0.5 * theta[0]);
      const double z1 = rng.normal(), z2 = rng.normal();
      const double u1 = z1;
      const double u2 = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
      const double scale = std::sqrt((nu - 2.0) / rng.chi_squared(nu));
      y[0] = u1 * scale;
      y[1] = u2 * scale;
      return y;
    }
    case Family::ged_location:
      y[0] = theta[0] + rng.ged(psi[0], psi[1]);
      return y;
    case Family::t_location:
      y[0] = theta[0] + psi[0] * rng.student_t(psi[1]);
      return y;
    case Family::gaussian_location:
      y[0] = theta[0] + std::sqrt(psi[0]) * rng.normal();
      return y;
    case Family::gamma_two_param:
      y[0] = rng.gamma(theta[0]) / theta[1];
      return y;
    case Family::gamma_two_param_exp:
      y[0] = rng.gamma(std::exp(theta[0])) / std::exp(theta[1]);
      return y;
    case Family::dirichlet_log_concentration:
      return rng.dirichlet(std::exp(theta[0]), model.obs_dim());
    case Family::gaussian_regression:
    case Family::asymmetric_laplace_quantile:
      throw ConfigError(
          "draw_observation: no data-generating process is defined for this family");
  }
  throw ConfigError("draw_observation: unknown family");
}

SimulationResult simulate(const DensityModel& model, const DgpSpec& spec) {
  spec.validate(model);
  Rng rng = Rng::substream(spec.seed, 0);
  const int K = model.param_dim();
  SimulationResult out;
  out.y = Matrix(spec.T, model.obs_dim());
  out.theta0 = Matrix(spec.T, K);

  switch (spec.kind) {
    case DgpSpec::Kind::isd_dgp: {
      // The filter recursion itself generates the state: θ⁰_t = θ_{t|t-1}.
      const DensityModel shaped =
          spec.xi0.psi.size() > 0 ? model.with_shape(spec.xi0.psi) : model;
      spec.xi0.prediction.validate(shaped.domain());
      Vector pred = spec.xi0.init ? *spec.xi0.init : spec.xi0.prediction.unconditional_level();
      FilterOptions fopts;  // defaults mirror run_filter
      for (int t = 0; t < spec.T; ++t) {
        out.theta0.row(t) = pred.transpose();
        const Vector yt = draw_observation(shaped, pred, rng);
        out.y.row(t) = yt.transpose();
        UpdateResult ur = isd_update(shaped, yt, shaped.param_vector(pred),
                                     spec.xi0.penalty, Vector(), fopts.solver);
        pred = spec.xi0.prediction.omega + spec.xi0.prediction.phi * ur.theta_upd.values;
      }
      return out;
    }
    case DgpSpec::Kind::ar1_state:
    case DgpSpec::Kind::dirichlet_ar1: {
      double state = spec.omega0 / (1.0 - spec.phi0);  // unconditional mean
      for (int t = -spec.burn_in; t < spec.T; ++t) {
        if (t >= 0) {
          out.theta0(t, 0) = state;
          out.y.row(t) =
              draw_observation(model, out.theta0.row(t).transpose(), rng).transpose();
        }
        state = spec.omega0 + spec.phi0 * state +
                spec.sigma_eta * innovation_draw(rng, spec.innovation, spec.nu0);
      }
      return out;
    }
    case DgpSpec::Kind::square_wave_gamma: {
      constexpr double kTwoPi = 6.283185307179586476925286766559;
      for (int t = 0; t < spec.T; ++t) {
        const double step = static_cast<double>(t + 1);  // 1-based time index
        const double a = 2.0 + sign_wave(std::sin(kTwoPi * step / 400.0));
        const double b = 8.0 + 3.0 * sign_wave(std::cos(kTwoPi * step / 1000.0));
        out.theta0(t, 0) = a;
        out.theta0(t, 1) = b;
        out.y(t, 0) = rng.gamma(a) / b;
      }
      return out;
    }
  }
  throw ConfigError("simulate: unknown DGP kind");
}

std::pair<double, double> mse(const Matrix& predictions, const Matrix& theta0, int split_R) {
  if (predictions.rows() != theta0.rows() || predictions.cols() != theta0.cols()) {
    throw LengthMismatch("mse(): predictions and true states have different shapes");
  }
  const int T = static_cast<int>(predictions.rows());
  if (split_R < 0 || split_R > T) throw LengthMismatch("mse(): split index out of range");

  auto range_mse = [&](int lo, int hi) {
    if (lo >= hi) return 0.0;
    double acc = 0.0;
    for (int t = lo; t < hi; ++t) {
      for (int k = 0; k < predictions.cols(); ++k) {
        const double d = predictions(t, k) - theta0(t, k);
        if (!std::isfinite(d)) return kInfinity;
        acc += d * d;
      }
    }
    return acc / (static_cast<double>(hi - lo) * static_cast<double>(predictions.cols()));
  };
  return {range_mse(0, split_R), range_mse(split_R, T)};
}

namespace {

double median_of(std::vector<double> values) {
  if (values.empty()) return kInfinity;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::vector<ArmAggregate> compute_aggregates(const std::vector<std::string>& labels,
                                             const std::vector<ReplicationRow>& rows,
                                             const std::map<std::string, double>& true_values) {
  std::vector<ArmAggregate> aggregates;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    ArmAggregate agg;
    agg.label = labels[a];
    std::vector<double> in_all, out_all, in_finite, out_finite;
    std::map<std::string, std::pair<double, int>> sq_err;  // value: (Σ err², n)
    int infinite_in = 0, infinite_out = 0, usable = 0;
    for (const ReplicationRow& row : rows) {
      const ArmResult& r = row.arms[a];
      if (r.fit_failed) {
        ++agg.n_fit_failures;
        continue;
      }
      ++usable;
      in_all.push_back(r.in_mse);
      out_all.push_back(r.out_mse);
      if (std::isfinite(r.in_mse)) in_finite.push_back(r.in_mse); else ++infinite_in;
      if (std::isfinite(r.out_mse)) out_finite.push_back(r.out_mse); else ++infinite_out;
      for (const auto& [name, truth] : true_values) {
        auto it = r.xi_hat.find(name);
        if (it == r.xi_hat.end()) continue;
        auto& cell = sq_err[name];
        const double e = it->second - truth;
        cell.first += e * e;
        cell.second += 1;
      }
    }
    agg.n_rows = usable;
    auto mean_of = [](const std::vector<double>& v) {
      if (v.empty()) return kInfinity;
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    agg.mean_in_mse = mean_of(in_all);
    agg.mean_out_mse = mean_of(out_all);
    agg.mean_in_mse_finite = mean_of(in_finite);
    agg.mean_out_mse_finite = mean_of(out_finite);
    agg.median_in_mse = median_of(in_all);
    agg.median_out_mse = median_of(out_all);
    if (usable > 0) {
      agg.divergence_fraction_in = static_cast<double>(infinite_in) / usable;
      agg.divergence_fraction_out = static_cast<double>(infinite_out) / usable;
    }
    for (const auto& [name, cell] : sq_err) {
      if (cell.second > 0) agg.rmse[name] = std::sqrt(cell.first / cell.second);
    }
    aggregates.push_back(std::move(agg));
  }
  return aggregates;
}

namespace {

ReplicationRow run_one_replication(int rep, const DensityModel& dgp_model, const DgpSpec& dgp,
                                   const std::vector<StudyArm>& arms, int split_R,
                                   const StudyOptions& opts, std::uint64_t master_seed) {
  ReplicationRow row;
  row.rep = rep;
  row.seed = mix_seed(master_seed, static_cast<std::uint64_t>(2 * rep));

  DgpSpec spec_r = dgp;
  spec_r.seed = row.seed;
  SimulationResult sim;
  bool sim_ok = true;
  std::string sim_note;
  try {
    sim = simulate(dgp_model, spec_r);
  } catch (const Error& e) {
    sim_ok = false;
    sim_note = std::string("simulation failed: ") + e.what();
  }

  for (const StudyArm& arm : arms) {
    ArmResult result;
    if (!sim_ok) {
      result.fit_failed = true;
      result.note = sim_note;
      row.arms.push_back(std::move(result));
      continue;
    }
    try {
      FitConfig cfg = arm.fit;
      cfg.seed = mix_seed(master_seed, static_cast<std::uint64_t>(2 * rep + 1));
      const Matrix train = sim.y.topRows(split_R);
      auto [statics, report] = fit(arm.model, train, Matrix(), cfg);
      result.xi_hat = report.estimates;
      result.total_loglik = report.total_loglik;

      FilterOptions fopts = opts.filter;
      fopts.mode = cfg.mode;
      fopts.solver = cfg.solver;
      fopts.overflow_guard = cfg.overflow_guard;
      const FilterPath path = run_filter(arm.model, sim.y, Matrix(), statics, fopts);
      result.diverged = path.diverged;

      Matrix truth = sim.theta0;
      if (arm.state_map == StudyArm::StateMap::log) {
        truth = truth.array().log().matrix();
      }
      auto [in_mse, out_mse] = mse(path.predictions, truth, split_R);
      result.in_mse = in_mse;
      result.out_mse = out_mse;
    } catch (const Error& e) {
      result.fit_failed = true;
      result.note = e.what();
    }
    row.arms.push_back(std::move(result));
  }
  return row;
}

}  // namespace

ReplicationReport run_replication_study(const DensityModel& dgp_model, const DgpSpec& dgp,
                                        const std::vector<StudyArm>& arms, int n_reps,
                                        int split_R, const StudyOptions& opts) {
  if (n_reps < 1) throw ConfigError("run_replication_study: n_reps must be positive");
  if (split_R <= 0 || split_R >= dgp.T) {
    throw ConfigError("run_replication_study: split_R must lie strictly inside the series");
  }
  if (arms.empty()) throw ConfigError("run_replication_study: no study arms given");

  ReplicationReport report;
  report.split_R = split_R;
  report.master_seed = dgp.seed;
  report.true_values = opts.true_values;
  for (const StudyArm& arm : arms) report.arm_labels.push_back(arm.label);
  report.rows.resize(static_cast<std::size_t>(n_reps));

  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    for (int rep = 0; rep < n_reps; ++rep) {
      report.rows[static_cast<std::size_t>(rep)] =
          run_one_replication(rep, dgp_model, dgp, arms, split_R, opts, dgp.seed);
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w]() {
        for (int rep = w; rep < n_reps; rep += threads) {
          report.rows[static_cast<std::size_t>(rep)] =
              run_one_replication(rep, dgp_model, dgp, arms, split_R, opts, dgp.seed);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  report.aggregates = compute_aggregates(report.arm_labels, report.rows, opts.true_values);
  return report;
}

}  // namespace isdf
