#include "isdf/filter.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "isdf/common.hpp"
#include "isdf/densities.hpp"
#include "isdf/diagnostics.hpp"
#include "isdf/rng.hpp"
#include "isdf/simulate.hpp"
#include "isdf/update.hpp"
#include "family_cases.hpp"
#include "oracles.hpp"

namespace {

using isdf::DensityModel;
using isdf::DgpSpec;
using isdf::FilterMode;
using isdf::FilterOptions;
using isdf::FilterPath;
using isdf::Matrix;
using isdf::PenaltySpec;
using isdf::PredictionSpec;
using isdf::Rng;
using isdf::StaticParams;
using isdf::Vector;
using test_support::scalar;

StaticParams scalar_statics(double h, double omega, double phi, double m_factor = 1.0) {
  StaticParams s;
  s.penalty = PenaltySpec::static_scalar(1.0 / (h * m_factor));
  s.prediction = PredictionSpec::unconstrained(scalar(omega), Matrix::Constant(1, 1, phi));
  s.scalar_h = h;
  return s;
}

// ---------------------------------------------------------------------------
// Filter-as-DGP round trip: filtering data generated by the recursion itself,
// with the same statics, must reproduce the generating state path exactly.
// ---------------------------------------------------------------------------

TEST(Filter, SelfGeneratedDataReproducesStatePathPoisson) {
  const DensityModel m = DensityModel::poisson();
  const StaticParams statics = scalar_statics(0.10, 0.0, 0.97);
  const DgpSpec dgp = DgpSpec::isd(statics, 500, 424242);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const FilterPath path = isdf::run_filter(m, sim.y, Matrix(), statics);
  ASSERT_FALSE(path.diverged);
  ASSERT_EQ(path.predictions.rows(), 500);
  EXPECT_LE((path.predictions - sim.theta0).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Filter, SelfGeneratedDataReproducesStatePathGaussianVolatility) {
  const DensityModel m = DensityModel::gaussian_volatility();
  const StaticParams statics = scalar_statics(0.05, 0.02, 0.95);
  const DgpSpec dgp = DgpSpec::isd(statics, 400, 77);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const FilterPath path = isdf::run_filter(m, sim.y, Matrix(), statics);
  ASSERT_FALSE(path.diverged);
  EXPECT_LE((path.predictions - sim.theta0).cwiseAbs().maxCoeff(), 1e-10);
}

// ---------------------------------------------------------------------------
// Recursion structure.
// ---------------------------------------------------------------------------

TEST(Filter, PredictionsFollowAffineMapOfUpdates) {
  const DensityModel m = DensityModel::poisson();
  const double omega = 0.05, phi = 0.9;
  const StaticParams statics = scalar_statics(0.2, omega, phi);
  const DgpSpec dgp = DgpSpec::ar1(omega, phi, 0.1, 200, 5);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const FilterPath path = isdf::run_filter(m, sim.y, Matrix(), statics);
  ASSERT_FALSE(path.diverged);
  // First prediction comes from the (unconditional-level) initialization.
  const double uncond = omega / (1.0 - phi);
  EXPECT_EQ(path.predictions(0, 0), omega + phi * uncond);
  for (int t = 0; t + 1 < 200; ++t) {
    ASSERT_EQ(path.predictions(t + 1, 0), omega + phi * path.updates(t, 0)) << "t=" << t;
  }
  EXPECT_EQ(path.final_prediction[0], omega + phi * path.updates(199, 0));
}

TEST(Filter, TotalLoglikMatchesIndependentRecomputation) {
  const DensityModel m = DensityModel::gaussian_volatility();
  const StaticParams statics = scalar_statics(0.1, 0.0, 0.95);
  const DgpSpec dgp = DgpSpec::ar1(0.0, 0.95, 0.2, 300, 11);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const FilterPath path = isdf::run_filter(m, sim.y, Matrix(), statics);
  ASSERT_FALSE(path.diverged);
  double total = 0.0;
  for (int t = 0; t < 300; ++t) {
    const double contrib =
        m.log_density(path.predictions.row(t).transpose(), sim.y.row(t).transpose());
    ASSERT_NEAR(contrib, path.loglik_contribs[t], 1e-12) << "t=" << t;
    total += contrib;
  }
  EXPECT_NEAR(total, path.total_loglik, 1e-12 * (1.0 + std::abs(total)));
}

TEST(Filter, PositiveDomainStaysPositiveThroughout) {
  const DensityModel m = DensityModel::gamma_two_param();
  StaticParams statics;
  statics.penalty = PenaltySpec::static_matrix(5.0 * Matrix::Identity(2, 2));
  Vector omega(2);
  omega << 0.2, 0.4;
  Vector phi_diag(2);
  phi_diag << 0.9, 0.85;
  statics.prediction = PredictionSpec::positive_diagonal(omega, phi_diag);
  const DgpSpec dgp = DgpSpec::isd(statics, 300, 99);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const FilterPath path = isdf::run_filter(m, sim.y, Matrix(), statics);
  ASSERT_FALSE(path.diverged);
  EXPECT_GT(path.predictions.minCoeff(), 0.0);
  EXPECT_GT(path.updates.minCoeff(), 0.0);
  EXPECT_TRUE(path.final_prediction.allFinite());
}

TEST(Filter, EmptySeriesYieldsEmptyPath) {
  const DensityModel m = DensityModel::poisson();
  const StaticParams statics = scalar_statics(0.1, 0.0, 0.9);
  const FilterPath path = isdf::run_filter(m, Matrix(0, 1), Matrix(), statics);
  EXPECT_EQ(path.predictions.rows(), 0);
  EXPECT_EQ(path.updates.rows(), 0);
  EXPECT_EQ(path.loglik_contribs.size(), 0);
  EXPECT_EQ(path.total_loglik, 0.0);
  EXPECT_FALSE(path.diverged);
  // The final prediction is still the one-step map of the initialization.
  ASSERT_EQ(path.final_prediction.size(), 1);
  EXPECT_EQ(path.final_prediction[0], 0.0);
}

// ---------------------------------------------------------------------------
// The prediction map in isolation.
// ---------------------------------------------------------------------------

TEST(Filter, PredictExamples) {
  const DensityModel pois = DensityModel::poisson();
  // Identity map: pass-through.
  {
    const PredictionSpec spec = PredictionSpec::identity(1);
    const isdf::ParamVector out = isdf::predict(pois.param_vector(scalar(1.3)), spec);
    EXPECT_EQ(out.values[0], 1.3);
  }
  // Scalar AR toward zero.
  {
    const PredictionSpec spec =
        PredictionSpec::unconstrained(scalar(0.0), Matrix::Constant(1, 1, 0.97));
    const isdf::ParamVector out = isdf::predict(pois.param_vector(scalar(2.0)), spec);
    EXPECT_NEAR(out.values[0], 1.94, 1e-15);
  }
  // Positive-diagonal two-parameter map.
  {
    const DensityModel gam = DensityModel::gamma_two_param();
    Vector omega(2);
    omega << 1.0, 0.1;
    Vector phi_diag(2);
    phi_diag << 0.5, 0.9;
    const PredictionSpec spec = PredictionSpec::positive_diagonal(omega, phi_diag);
    Vector theta(2);
    theta << 2.0, 10.0;
    const isdf::ParamVector out = isdf::predict(gam.param_vector(theta), spec);
    EXPECT_NEAR(out.values[0], 2.0, 1e-15);
    EXPECT_NEAR(out.values[1], 9.1, 1e-15);
  }
  // A map that leaves the domain is a configuration bug, loudly reported.
  {
    const DensityModel gam = DensityModel::gamma_two_param();
    Vector omega(2);
    omega << -5.0, 0.1;
    const PredictionSpec spec =
        PredictionSpec::unconstrained(omega, 0.5 * Matrix::Identity(2, 2));
    Vector theta(2);
    theta << 2.0, 10.0;
    EXPECT_THROW(isdf::predict(gam.param_vector(theta), spec), isdf::DomainEscape);
  }
}

TEST(Filter, PredictionSpecValidation) {
  // positive_diagonal requires entries in (0,1) and a positive intercept.
  Vector omega(1);
  omega << 0.1;
  Vector bad_phi(1);
  bad_phi << 1.2;
  EXPECT_THROW(PredictionSpec::positive_diagonal(omega, bad_phi), isdf::ConfigError);
  EXPECT_THROW(PredictionSpec::convex_combination(omega, 1.0), isdf::ConfigError);
  EXPECT_THROW(PredictionSpec::convex_combination(omega, -0.1), isdf::ConfigError);
  // Unconditional level ω/(1−Φ).
  const PredictionSpec ar =
      PredictionSpec::unconstrained(scalar(0.3), Matrix::Constant(1, 1, 0.4));
  EXPECT_NEAR(ar.unconditional_level()[0], 0.5, 1e-15);
  const PredictionSpec rw = PredictionSpec::identity(1);
  EXPECT_THROW(rw.unconditional_level(), isdf::SpectralRadiusError);
}

TEST(Filter, FilterModeIdsRoundTrip) {
  EXPECT_EQ(isdf::filter_mode_id(FilterMode::isd), "isd");
  EXPECT_EQ(isdf::filter_mode_id(FilterMode::esd), "esd");
  EXPECT_EQ(isdf::filter_mode_from_id("isd"), FilterMode::isd);
  EXPECT_EQ(isdf::filter_mode_from_id("esd"), FilterMode::esd);
  EXPECT_THROW(isdf::filter_mode_from_id("midpoint"), isdf::ConfigError);
}

// ---------------------------------------------------------------------------
// Online regression: with a random-walk prediction and a constant true
// coefficient, the filter behaves like a normalized-LMS estimator and locks
// onto the coefficient.
// ---------------------------------------------------------------------------

TEST(Filter, RegressionFilterConvergesToConstantCoefficient) {
  const double sigma2 = 1.0, h = 0.02, beta0 = 1.0, noise_sd = 0.05;
  const DensityModel m = DensityModel::gaussian_regression(1, sigma2);
  StaticParams statics;
  statics.penalty = PenaltySpec::static_scalar(1.0 / h);
  statics.prediction = PredictionSpec::identity(1);
  Vector init(1);
  init << 0.0;
  statics.init = init;

  const int T = 600;
  Rng rng(2024);
  Matrix y(T, 1), exo(T, 1);
  for (int t = 0; t < T; ++t) {
    exo(t, 0) = rng.normal();
    y(t, 0) = beta0 * exo(t, 0) + noise_sd * rng.normal();
  }
  const FilterPath path = isdf::run_filter(m, y, exo, statics);
  ASSERT_FALSE(path.diverged);
  for (int t = 500; t < T; ++t) {
    ASSERT_LT(std::abs(path.updates(t, 0) - beta0), 0.05) << "t=" << t;
  }
}

// ---------------------------------------------------------------------------
// Implicit vs explicit robustness: on heavy-curvature data the explicit step
// explodes while the implicit one does not (identical inputs).
// ---------------------------------------------------------------------------

TEST(Filter, ExplicitDivergesWhereImplicitSurvivesOnSteepShapeData) {
  // Shape υ=4 makes the location-score cubic in the residual: a large
  // prediction error produces an enormous explicit step.
  const double ups = 4.0;
  const double sigma = std::sqrt(std::exp(std::lgamma(1.0 / ups) - std::lgamma(3.0 / ups)));
  const DensityModel m = DensityModel::ged_location(sigma, ups);
  const StaticParams statics = scalar_statics(0.5, 0.0, 0.98);
  const DgpSpec dgp = DgpSpec::ar1(0.0, 0.98, 1.0, 2000, 314159);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);

  FilterOptions isd_opts;
  isd_opts.mode = FilterMode::isd;
  const FilterPath isd_path = isdf::run_filter(m, sim.y, Matrix(), statics, isd_opts);
  EXPECT_FALSE(isd_path.diverged);
  EXPECT_TRUE(std::isfinite(isd_path.total_loglik));

  FilterOptions esd_opts;
  esd_opts.mode = FilterMode::esd;
  const FilterPath esd_path = isdf::run_filter(m, sim.y, Matrix(), statics, esd_opts);
  EXPECT_TRUE(esd_path.diverged);
  ASSERT_GE(esd_path.first_divergence_index, 0);
  // Contributions at and after the divergence point carry the -inf sentinel.
  EXPECT_EQ(esd_path.loglik_contribs[esd_path.first_divergence_index], -isdf::kInfinity);
  EXPECT_EQ(esd_path.total_loglik, -isdf::kInfinity);
  EXPECT_TRUE(esd_path.final_prediction.hasNaN());
}

// ---------------------------------------------------------------------------
// Initialization-difference probe.
// ---------------------------------------------------------------------------

TEST(Filter, TwoInitProbeZeroForEqualInits) {
  const DensityModel m = DensityModel::poisson();
  const StaticParams statics = scalar_statics(0.1, 0.0, 0.97);
  const DgpSpec dgp = DgpSpec::ar1(0.0, 0.97, 0.1, 100, 7);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const auto dist = isdf::two_init_probe(m, sim.y, Matrix(), statics, scalar(0.4), scalar(0.4));
  ASSERT_EQ(static_cast<int>(dist.size()), 100);
  for (double d : dist) ASSERT_EQ(d, 0.0);
}

TEST(Filter, InitializationDifferenceDecaysGeometrically) {
  struct Design {
    DensityModel model;
    double h, omega, phi, m_factor, sigma_eta;
  };
  const std::vector<Design> designs = {
      {DensityModel::poisson(), 0.10, 0.0, 0.97, 1.0, 0.15},
      {DensityModel::gaussian_volatility(), 0.08, 0.0, 0.95, 1.0, 0.20},
  };
  for (const Design& dsn : designs) {
    const StaticParams statics = scalar_statics(dsn.h, dsn.omega, dsn.phi, dsn.m_factor);
    const double p = statics.penalty.P(0, 0);
    const double kap = isdf::kappa(p, dsn.phi, 0.0);
    ASSERT_LT(kap, 1.0);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const DgpSpec dgp = DgpSpec::ar1(dsn.omega, dsn.phi, dsn.sigma_eta, 600,
                                       isdf::mix_seed(9000, seed));
      const isdf::SimulationResult sim = isdf::simulate(dsn.model, dgp);
      const auto dist = isdf::two_init_probe(dsn.model, sim.y, Matrix(), statics,
                                             scalar(-2.0), scalar(2.0));
      ASSERT_EQ(static_cast<int>(dist.size()), 600);
      EXPECT_GT(dist[0], 0.0);
      // Forgetting: the difference collapses within 500 steps.
      ASSERT_LE(dist[500], 1e-8 * dist[0]) << "seed " << seed;
      // Fitted log-slope at least as fast as the certificate ½·log κ̄.
      std::vector<double> ts, logs;
      for (int t = 0; t < 300 && dist[t] > 1e-280; ++t) {
        ts.push_back(static_cast<double>(t));
        logs.push_back(std::log(dist[t]));
      }
      ASSERT_GE(ts.size(), 50u);
      const double slope = oracles::ls_slope(ts, logs);
      EXPECT_LE(slope, 0.5 * std::log(kap) + 1e-3) << "seed " << seed;
    }
  }
}

// ---------------------------------------------------------------------------
// Perturbation propagation: small per-step update perturbations change the
// final prediction only by a comparable amount.
// ---------------------------------------------------------------------------

TEST(Filter, SmallUpdatePerturbationsStayBounded) {
  const DensityModel m = DensityModel::poisson();
  const StaticParams statics = scalar_statics(0.1, 0.0, 0.97);
  const DgpSpec dgp = DgpSpec::ar1(0.0, 0.97, 0.15, 2000, 808);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const FilterPath base = isdf::run_filter(m, sim.y, Matrix(), statics);
  ASSERT_FALSE(base.diverged);

  Rng rng(4242);
  Matrix pert(2000, 1);
  for (int t = 0; t < 2000; ++t) pert(t, 0) = rng.uniform(-1e-6, 1e-6);
  FilterOptions opts;
  opts.update_perturbations = &pert;
  const FilterPath bumped = isdf::run_filter(m, sim.y, Matrix(), statics, opts);
  ASSERT_FALSE(bumped.diverged);
  const double delta =
      std::abs(bumped.final_prediction[0] - base.final_prediction[0]);
  EXPECT_LT(delta, 1e-3);
  EXPECT_GT((bumped.updates - base.updates).cwiseAbs().maxCoeff(), 0.0);
}

// ---------------------------------------------------------------------------
// Determinism and initialization plumbing.
// ---------------------------------------------------------------------------

TEST(Filter, RepeatRunsAreBitIdentical) {
  const DensityModel m = DensityModel::gaussian_volatility();
  const StaticParams statics = scalar_statics(0.1, 0.01, 0.9);
  const DgpSpec dgp = DgpSpec::ar1(0.01, 0.9, 0.2, 250, 31);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);
  const FilterPath a = isdf::run_filter(m, sim.y, Matrix(), statics);
  const FilterPath b = isdf::run_filter(m, sim.y, Matrix(), statics);
  ASSERT_EQ(a.predictions.rows(), b.predictions.rows());
  EXPECT_TRUE((a.predictions.array() == b.predictions.array()).all());
  EXPECT_TRUE((a.updates.array() == b.updates.array()).all());
  EXPECT_EQ(a.total_loglik, b.total_loglik);
}

TEST(Filter, InitOverrideChangesFirstPrediction) {
  const DensityModel m = DensityModel::poisson();
  StaticParams statics = scalar_statics(0.1, 0.3, 0.5);  // unconditional 0.6
  const DgpSpec dgp = DgpSpec::ar1(0.3, 0.5, 0.1, 50, 3);
  const isdf::SimulationResult sim = isdf::simulate(m, dgp);

  const FilterPath def = isdf::run_filter(m, sim.y, Matrix(), statics);
  EXPECT_NEAR(def.predictions(0, 0), 0.3 + 0.5 * 0.6, 1e-14);

  statics.init = scalar(1.4);
  const FilterPath ovr = isdf::run_filter(m, sim.y, Matrix(), statics);
  EXPECT_NEAR(ovr.predictions(0, 0), 0.3 + 0.5 * 1.4, 1e-14);
}

TEST(Filter, MismatchedShapesAreRejected) {
  const DensityModel m = DensityModel::gaussian_regression(2, 1.0);
  StaticParams statics;
  statics.penalty = PenaltySpec::static_scalar(10.0);
  statics.prediction = PredictionSpec::identity(2);
  statics.init = Vector::Zero(2);
  Matrix y(10, 1);
  y.setZero();
  // Missing exogenous inputs for a regression family.
  EXPECT_THROW(isdf::run_filter(m, y, Matrix(), statics), isdf::LengthMismatch);
  // Exogenous rows misaligned with the observations.
  Matrix exo(9, 2);
  exo.setZero();
  EXPECT_THROW(isdf::run_filter(m, y, exo, statics), isdf::LengthMismatch);
}

}  // namespace
