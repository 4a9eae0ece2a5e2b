#include "isdf/update.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "isdf/common.hpp"
#include "isdf/densities.hpp"
#include "isdf/rng.hpp"
#include "isdf/simulate.hpp"
#include "family_cases.hpp"
#include "oracles.hpp"

namespace {

using isdf::DensityModel;
using isdf::Matrix;
using isdf::PenaltySpec;
using isdf::Rng;
using isdf::UpdateResult;
using isdf::Vector;
using test_support::FamilyCase;
using test_support::family_catalog;
using test_support::scalar;

/// Random diagonal SPD penalty sized to the family's parameter dimension.
/// Correlation families get entries strictly above their Hessian upper bound
/// 1/4, so the penalized objective is strictly concave for them.
PenaltySpec random_penalty(const DensityModel& model, Rng& rng) {
  const int k = model.param_dim();
  const auto info = model.concavity_info();
  double lo = 0.3, hi = 5.0;
  if (!info.log_concave && info.hessian_upper_bound) {
    lo = *info.hessian_upper_bound + 0.05;
    hi = lo + 5.0;
  }
  Matrix p = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) p(i, i) = rng.uniform(lo, hi);
  return PenaltySpec::static_matrix(p);
}

double penalized_objective(const DensityModel& model, const Vector& y,
                           const Vector& theta_pred, const Matrix& p,
                           const Vector& theta, const Vector& exo = Vector()) {
  const Vector d = theta - theta_pred;
  return model.log_density(theta, y, exo) - 0.5 * d.dot(p * d);
}

// ---------------------------------------------------------------------------
// Oracle agreement.
// ---------------------------------------------------------------------------

TEST(Update, GaussianVolatilityMatchesDenseGridArgmax) {
  const DensityModel m = DensityModel::gaussian_volatility();
  Rng rng(31001);
  for (int i = 0; i < 5; ++i) {
    const Vector theta_pred = scalar(rng.uniform(-2.0, 2.0));
    const Vector y = isdf::draw_observation(m, scalar(rng.uniform(-2.0, 2.0)), rng);
    const PenaltySpec penalty = random_penalty(m, rng);
    const UpdateResult res =
        isdf::isd_update(m, y, m.param_vector(theta_pred), penalty);
    const auto grid = oracles::grid_argmax(
        [&](double t) {
          return penalized_objective(m, y, theta_pred, penalty.P, scalar(t));
        },
        theta_pred[0] - 10.0, theta_pred[0] + 10.0, 1000000);
    EXPECT_LE(std::abs(res.theta_upd.values[0] - grid.x), grid.step)
        << "instance " << i;
  }
}

TEST(Update, ScalarFamiliesMatchCoarseGridArgmax) {
  for (const FamilyCase& fc : family_catalog()) {
    if (fc.model.param_dim() != 1 || !fc.smooth) continue;
    Rng rng(31002);
    for (int i = 0; i < 50; ++i) {
      const Vector theta_pred = fc.draw_theta(rng);
      const Vector exo = fc.draw_exo ? fc.draw_exo(rng) : Vector();
      const Vector y = fc.draw_y(rng, fc.draw_theta(rng), exo);
      const PenaltySpec penalty = random_penalty(fc.model, rng);
      const UpdateResult res =
          isdf::isd_update(fc.model, y, fc.model.param_vector(theta_pred), penalty);
      const auto grid = oracles::grid_argmax(
          [&](double t) {
            const Vector th = scalar(t);
            if (!fc.model.domain().contains(th)) {
              return -std::numeric_limits<double>::infinity();
            }
            return penalized_objective(fc.model, y, theta_pred, penalty.P, th, exo);
          },
          theta_pred[0] - 10.0, theta_pred[0] + 10.0, 100000);
      ASSERT_LE(std::abs(res.theta_upd.values[0] - grid.x), grid.step)
          << fc.label << " instance " << i << " theta_pred=" << theta_pred[0]
          << " y=" << y.transpose();
    }
  }
}

TEST(Update, PoissonRootMatchesBisectionOracle) {
  const DensityModel m = DensityModel::poisson();
  const UpdateResult res = isdf::isd_update(
      m, scalar(3.0), m.param_vector(scalar(0.0)), PenaltySpec::static_scalar(1.0));
  const double root = oracles::bisect(
      [](double t) { return 3.0 - std::exp(t) - t; }, 0.0, 3.0, 200);
  EXPECT_NEAR(res.theta_upd.values[0], root, 1e-9);
}

// ---------------------------------------------------------------------------
// Update invariants across families.
// ---------------------------------------------------------------------------

TEST(Update, ObjectiveAndLikelihoodGainsAcrossFamilies) {
  // Likelihood-improvement inequality at full volume: 10^5 random instances
  // spread over the catalog.
  const auto cases = family_catalog();
  const int per_family = 100000 / static_cast<int>(cases.size()) + 1;
  for (const FamilyCase& fc : cases) {
    Rng rng(31003);
    for (int i = 0; i < per_family; ++i) {
      const Vector theta_pred = fc.draw_theta(rng);
      const Vector exo = fc.draw_exo ? fc.draw_exo(rng) : Vector();
      const Vector y = fc.draw_y(rng, fc.draw_theta(rng), exo);
      const PenaltySpec penalty = random_penalty(fc.model, rng);
      const UpdateResult res = isdf::isd_update(
          fc.model, y, fc.model.param_vector(theta_pred), penalty, exo);
      ASSERT_GE(res.objective_gain, -1e-12) << fc.label << " instance " << i;
      const Vector d = res.theta_upd.values - theta_pred;
      ASSERT_GE(res.loglik_gain, 0.5 * d.dot(penalty.P * d) - 1e-9)
          << fc.label << " instance " << i;
    }
  }
}

TEST(Update, AlignmentWithPredictionScore) {
  for (const FamilyCase& fc : family_catalog()) {
    if (!fc.model.concavity_info().log_concave) continue;
    Rng rng(31004);
    for (int i = 0; i < 2000; ++i) {
      const Vector theta_pred = fc.draw_theta(rng);
      const Vector exo = fc.draw_exo ? fc.draw_exo(rng) : Vector();
      const Vector y = fc.draw_y(rng, fc.draw_theta(rng), exo);
      const PenaltySpec penalty = random_penalty(fc.model, rng);
      const UpdateResult res = isdf::isd_update(
          fc.model, y, fc.model.param_vector(theta_pred), penalty, exo);
      const Vector grad = fc.model.score(theta_pred, y, exo);
      ASSERT_GE((res.theta_upd.values - theta_pred).dot(grad), -1e-10)
          << fc.label << " instance " << i;
    }
  }
}

TEST(Update, CurvatureCorrectedIdentity) {
  for (const FamilyCase& fc : family_catalog()) {
    if (!fc.smooth) continue;
    Rng rng(31005);
    for (int i = 0; i < 200; ++i) {
      const Vector theta_pred = fc.draw_theta(rng);
      const Vector exo = fc.draw_exo ? fc.draw_exo(rng) : Vector();
      const Vector y = fc.draw_y(rng, fc.draw_theta(rng), exo);
      const PenaltySpec penalty = random_penalty(fc.model, rng);
      const UpdateResult res = isdf::isd_update(
          fc.model, y, fc.model.param_vector(theta_pred), penalty, exo);
      const Matrix avg = isdf::compute_average_hessian(
          fc.model, y, fc.model.param_vector(theta_pred), res.theta_upd, 32, exo);
      const Vector grad = fc.model.score(theta_pred, y, exo);
      const Vector predicted = (penalty.P + avg).ldlt().solve(grad);
      ASSERT_LE((res.theta_upd.values - theta_pred - predicted).norm(), 1e-6)
          << fc.label << " instance " << i;
    }
  }
}

TEST(Update, ImplicitStepNoLargerThanExplicitStepInPenaltyNorm) {
  // Shrinkage bound: the implicit step is at most
  // λmax(P)/(λmax(P)+α) times the explicit step θ_pred + P⁻¹∇, in ‖·‖_P.
  for (const FamilyCase& fc : family_catalog()) {
    const auto info = fc.model.concavity_info();
    if (!info.log_concave) continue;
    Rng rng(31006);
    for (int i = 0; i < 2000; ++i) {
      const Vector theta_pred = fc.draw_theta(rng);
      const Vector exo = fc.draw_exo ? fc.draw_exo(rng) : Vector();
      const Vector y = fc.draw_y(rng, fc.draw_theta(rng), exo);
      const PenaltySpec penalty = random_penalty(fc.model, rng);
      const UpdateResult res = isdf::isd_update(
          fc.model, y, fc.model.param_vector(theta_pred), penalty, exo);
      const Vector grad = fc.model.score(theta_pred, y, exo);
      const Vector explicit_step = penalty.P.ldlt().solve(grad);
      const Vector implicit_step = res.theta_upd.values - theta_pred;
      const double lambda_max =
          Eigen::SelfAdjointEigenSolver<Matrix>(penalty.P).eigenvalues().maxCoeff();
      const double coeff = lambda_max / (lambda_max + info.alpha);
      const double lhs = implicit_step.dot(penalty.P * implicit_step);
      const double rhs = explicit_step.dot(penalty.P * explicit_step);
      ASSERT_LE(lhs, coeff * coeff * rhs + 1e-9) << fc.label << " instance " << i;
    }
  }
}

TEST(Update, GaussianLocationShrinkageIsExactEquality) {
  // Linear score: the implicit step equals the explicit step scaled by
  // exactly α/(P+α), which reaches the shrinkage bound when α = P.
  const double obs_var = 0.5;  // α = 2
  const DensityModel m = DensityModel::gaussian_location(obs_var);
  const double alpha = 1.0 / obs_var;
  Rng rng(31007);
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform(0.5, 5.0);
    const double theta_pred = rng.uniform(-2.0, 2.0);
    const double y = rng.uniform(-4.0, 4.0);
    const UpdateResult res =
        isdf::isd_update(m, scalar(y), m.param_vector(scalar(theta_pred)),
                         PenaltySpec::static_scalar(p));
    const double expected = theta_pred + alpha * (y - theta_pred) / (p + alpha);
    ASSERT_NEAR(res.theta_upd.values[0], expected, 1e-9);
  }
}

TEST(Update, TwoPredictionsContractInPenaltyNorm) {
  // Updating two different predictions with the same observation brings them
  // closer in ‖·‖_P by at least the certified squared factor.
  for (const FamilyCase& fc : family_catalog()) {
    const auto info = fc.model.concavity_info();
    if (!info.log_concave) continue;
    Rng rng(31008);
    for (int i = 0; i < 2000; ++i) {
      const Vector pred_a = fc.draw_theta(rng);
      const Vector pred_b = fc.draw_theta(rng);
      const Vector exo = fc.draw_exo ? fc.draw_exo(rng) : Vector();
      const Vector y = fc.draw_y(rng, fc.draw_theta(rng), exo);
      const PenaltySpec penalty = random_penalty(fc.model, rng);
      const UpdateResult res_a = isdf::isd_update(
          fc.model, y, fc.model.param_vector(pred_a), penalty, exo);
      const UpdateResult res_b = isdf::isd_update(
          fc.model, y, fc.model.param_vector(pred_b), penalty, exo);
      const Vector before = pred_a - pred_b;
      const Vector after = res_a.theta_upd.values - res_b.theta_upd.values;
      const double lambda_max =
          Eigen::SelfAdjointEigenSolver<Matrix>(penalty.P).eigenvalues().maxCoeff();
      const double coeff = lambda_max / (lambda_max + info.alpha);
      ASSERT_LE(after.dot(penalty.P * after),
                coeff * coeff * before.dot(penalty.P * before) + 1e-9)
          << fc.label << " instance " << i;
    }
  }
}

// ---------------------------------------------------------------------------
// Trivial fixed points.
// ---------------------------------------------------------------------------

TEST(Update, ZeroScoreLeavesPredictionUnchanged) {
  const DensityModel m = DensityModel::poisson();
  const Vector theta_pred = scalar(std::log(2.0));
  const UpdateResult res = isdf::isd_update(
      m, scalar(2.0), m.param_vector(theta_pred), PenaltySpec::static_scalar(1.0));
  EXPECT_NEAR(res.theta_upd.values[0], theta_pred[0], 1e-12);
  EXPECT_NEAR(res.objective_gain, 0.0, 1e-12);

  const isdf::EsdResult esd = isdf::esd_update(
      m, scalar(2.0), m.param_vector(theta_pred), Matrix::Identity(1, 1) * 0.5);
  EXPECT_EQ(esd.theta_upd[0], theta_pred[0]);
  EXPECT_FALSE(esd.out_of_domain);
}

// ---------------------------------------------------------------------------
// Explicit update.
// ---------------------------------------------------------------------------

TEST(Update, ExplicitUpdateIsOneGradientStep) {
  const DensityModel m = DensityModel::gaussian_regression(2, 1.3);
  Rng rng(31009);
  for (int i = 0; i < 100; ++i) {
    Vector beta(2), x(2);
    beta << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
    x << rng.normal(), rng.normal();
    const double y = beta.dot(x) + rng.normal();
    Matrix h(2, 2);
    h << rng.uniform(0.1, 1.0), 0.0, 0.0, rng.uniform(0.1, 1.0);
    const isdf::EsdResult res =
        isdf::esd_update(m, scalar(y), m.param_vector(beta), h, x);
    const Vector expected = beta + h * x * (y - beta.dot(x)) / 1.3;
    ASSERT_LE((res.theta_upd - expected).norm(), 1e-12);
  }
}

TEST(Update, ExplicitRegressionStepRelatesToImplicitByShrinkageFactor) {
  const double sigma2 = 1.1;
  const DensityModel m = DensityModel::gaussian_regression(2, sigma2);
  Rng rng(31010);
  for (int i = 0; i < 200; ++i) {
    Vector beta(2), x(2);
    beta << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
    x << rng.normal(), rng.normal();
    const double y = rng.normal();
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = rng.uniform(0.1, 2.0);
    h(1, 1) = rng.uniform(0.1, 2.0);
    const Vector esd_step =
        isdf::esd_update(m, scalar(y), m.param_vector(beta), h, x).theta_upd - beta;
    const Vector isd_step = isdf::isd_update_regression(y, x, beta, h, sigma2) - beta;
    const double factor = sigma2 / (sigma2 + x.dot(h * x));
    ASSERT_LE((isd_step - factor * esd_step).norm(), 1e-12) << "instance " << i;
  }
}

TEST(Update, ExplicitUpdateFlagsDomainViolations) {
  const DensityModel m = DensityModel::gamma_two_param();
  Vector theta_pred(2);
  theta_pred << 1.0, 0.5;
  // A large observation makes the rate-score strongly negative
  // (∂/∂b = a/b − y = 2 − 10), so an identity learning rate pushes the rate
  // parameter below zero.
  const isdf::EsdResult res = isdf::esd_update(
      m, scalar(10.0), m.param_vector(theta_pred), Matrix::Identity(2, 2));
  EXPECT_TRUE(res.out_of_domain);
  EXPECT_LT(res.theta_upd[1], 0.0);  // returned as-is, not clipped
}

TEST(Update, ExplicitPoissonInfoScaledExample) {
  const DensityModel m = DensityModel::poisson();
  const double h = 0.1;
  const double theta_pred = 0.0;
  const Matrix rate = Matrix::Identity(1, 1) * (h * std::exp(-theta_pred / 2.0));
  const isdf::EsdResult res =
      isdf::esd_update(m, scalar(1.0), m.param_vector(scalar(theta_pred)), rate);
  EXPECT_NEAR(res.theta_upd[0], 0.0, 1e-15);
}

// ---------------------------------------------------------------------------
// Closed forms vs the generic solver.
// ---------------------------------------------------------------------------

TEST(Update, RegressionClosedFormMatchesGenericSolver) {
  const double sigma2 = 1.2;
  const DensityModel m = DensityModel::gaussian_regression(2, sigma2);
  Rng rng(31011);
  for (int i = 0; i < 1000; ++i) {
    Vector beta(2), x(2);
    beta << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    x << rng.normal(), rng.normal();
    const double y = beta.dot(x) + rng.normal();
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = rng.uniform(0.2, 3.0);
    h(1, 1) = rng.uniform(0.2, 3.0);
    const Vector closed = isdf::isd_update_regression(y, x, beta, h, sigma2);
    const UpdateResult generic = isdf::isd_update(
        m, scalar(y), m.param_vector(beta),
        PenaltySpec::static_matrix(h.inverse()), x);
    ASSERT_LE((closed - generic.theta_upd.values).norm(), 1e-10) << "instance " << i;
  }
  // Degenerate regressor: no information, no movement.
  const Vector frozen = isdf::isd_update_regression(
      1.0, Vector::Zero(2), Vector::Ones(2), Matrix::Identity(2, 2), sigma2);
  EXPECT_EQ(frozen, Vector::Ones(2));
}

TEST(Update, RegressionUpdateShrinksToZeroForHugeRegressors) {
  // With y = 0 and one enormous regressor, the update is pulled almost all
  // the way to the zero-residual point regardless of the prediction.
  Vector x(1), beta(1);
  x << 1e6;
  beta << 1.0;
  const Vector upd = isdf::isd_update_regression(
      0.0, x, beta, Matrix::Identity(1, 1) * 0.0169, 1.0);
  EXPECT_LE(std::abs(upd[0]), 1e-4);
}

TEST(Update, QuantileClosedFormExamples) {
  // Observation equal to the prediction: no adjustment.
  Vector q0 = scalar(0.7);
  Vector taus = scalar(0.5);
  const Vector same = isdf::isd_update_quantile(0.7, q0, taus, 1.0, 1.0);
  EXPECT_EQ(same[0], 0.7);

  // Large learning rate caps the update at the observation.
  const Vector capped = isdf::isd_update_quantile(1.0, scalar(0.0), taus, 4.002, 1.0);
  EXPECT_EQ(capped[0], 1.0);

  // Observation between two levels: lower moves up, upper moves down, order kept.
  Vector q(2), tt(2);
  q << -1.0, 1.0;
  tt << 0.25, 0.50;
  const Vector upd = isdf::isd_update_quantile(0.0, q, tt, 1.0, 1.0);
  EXPECT_NEAR(upd[0], -0.75, 1e-14);  // min{0, −1 + 1·0.25/1}
  EXPECT_NEAR(upd[1], 0.5, 1e-14);    // max{0, 1 − 1·0.5/1}
  EXPECT_LT(upd[0], upd[1]);

  Vector crossed(2);
  crossed << 1.0, 0.0;
  EXPECT_THROW(isdf::isd_update_quantile(0.5, crossed, tt, 1.0, 1.0),
               isdf::CrossedPredictions);
}

TEST(Update, QuantileOutputStaysOrderedOnRandomInstances) {
  Rng rng(31012);
  Vector taus(3);
  taus << 0.1, 0.5, 0.9;
  for (int i = 0; i < 10000; ++i) {
    Vector q(3);
    const double base = rng.uniform(-3.0, 3.0);
    q << base, base + rng.uniform(0.01, 2.0), base + rng.uniform(2.02, 4.0);
    const double y = rng.uniform(-6.0, 6.0);
    const double h = rng.uniform(0.01, 10.0);
    const double sigma = rng.uniform(0.2, 3.0);
    const Vector upd = isdf::isd_update_quantile(y, q, taus, h, sigma);
    ASSERT_LE(upd[0], upd[1]);
    ASSERT_LE(upd[1], upd[2]);
  }
}

TEST(Update, QuantileClosedFormMatchesGenericGlobalSearch) {
  const DensityModel m = DensityModel::quantiles({0.25, 0.5, 0.75}, 1.3);
  Rng rng(31013);
  isdf::SolverOptions opts;
  opts.multistart = true;
  for (int i = 0; i < 200; ++i) {
    Vector q(3);
    const double base = rng.uniform(-2.0, 0.0);
    q << base, base + rng.uniform(0.2, 1.0), base + rng.uniform(1.4, 2.4);
    const double y = rng.uniform(-4.0, 4.0);
    const double h = rng.uniform(0.1, 3.0);
    const Vector closed = isdf::isd_update_quantile(y, q, Vector(m.shape().tail(3)), h, 1.3);
    const UpdateResult generic = isdf::isd_update(
        m, scalar(y), m.param_vector(q),
        PenaltySpec::static_matrix(Matrix::Identity(3, 3) / h), Vector(), opts);
    ASSERT_LE((closed - generic.theta_upd.values).lpNorm<Eigen::Infinity>(), 1e-8)
        << "instance " << i;
  }
}

TEST(Update, TLocationClosedFormBasics) {
  // Zero innovation: prediction unchanged.
  const UpdateResult at_pred = isdf::isd_update_t_location(1.5, 1.5, 2.0, 1.0, 3.0);
  EXPECT_EQ(at_pred.theta_upd.values[0], 1.5);

  // Gaussian limit: weight tends to H/(1+H).
  const UpdateResult limit = isdf::isd_update_t_location(1.0, 0.0, 1.0, 1.0, 1e12);
  EXPECT_NEAR(limit.theta_upd.values[0], 0.5, 1e-6);
}

TEST(Update, TLocationWeightBoundAndBetweenness) {
  Rng rng(31014);
  for (int i = 0; i < 10000; ++i) {
    const double h = rng.uniform(0.05, 30.0);
    const double sigma = rng.uniform(0.3, 3.0);
    const double nu = rng.uniform(0.5, 20.0);
    const double theta_pred = rng.uniform(-5.0, 5.0);
    const double y = theta_pred + rng.uniform(-20.0, 20.0);
    const UpdateResult res = isdf::isd_update_t_location(y, theta_pred, h, sigma, nu);
    const double upd = res.theta_upd.values[0];
    ASSERT_GE(upd, std::min(y, theta_pred) - 1e-12);
    ASSERT_LE(upd, std::max(y, theta_pred) + 1e-12);
    if (y != theta_pred) {
      const double w = (upd - theta_pred) / (y - theta_pred);
      ASSERT_GT(w, 0.0) << "instance " << i;
      ASSERT_LE(w, h / (1.0 + h) + 1e-12) << "instance " << i;
    }
  }
}

TEST(Update, TLocationOutlierPicksNearPredictionRoot) {
  // Fitted interest-rate configuration: large learning rate, heavy tails.
  const double h = 23.717, sigma2 = 0.387, nu = 2.060;
  const double sigma = std::sqrt(sigma2);
  const double theta_pred = 0.0, y = 10.0;
  const UpdateResult res = isdf::isd_update_t_location(y, theta_pred, h, sigma, nu);

  // Oracle: dense-grid argmax of the scaled penalized objective
  // m·logp − (θ−θ_pred)²/(2H), with m = νσ²/(ν+1).
  const DensityModel m = DensityModel::t_location(sigma, nu);
  const double scale = nu * sigma2 / (nu + 1.0);
  const auto grid = oracles::grid_argmax(
      [&](double t) {
        return scale * m.log_density(scalar(t), scalar(y)) -
               (t - theta_pred) * (t - theta_pred) / (2.0 * h);
      },
      -1.0, 11.0, 1000000);
  EXPECT_LE(std::abs(res.theta_upd.values[0] - grid.x), grid.step);
}

TEST(Update, TLocationClosedFormMatchesGenericSolver) {
  Rng rng(31015);
  isdf::SolverOptions opts;
  opts.multistart = true;
  for (int i = 0; i < 300; ++i) {
    const double sigma = rng.uniform(0.5, 2.0);
    const double nu = rng.uniform(1.0, 8.0);
    const double h = rng.uniform(0.1, 5.0);
    const double theta_pred = rng.uniform(-2.0, 2.0);
    const double y = theta_pred + rng.uniform(-8.0, 8.0);
    const DensityModel m = DensityModel::t_location(sigma, nu);
    const UpdateResult closed = isdf::isd_update_t_location(y, theta_pred, h, sigma, nu);
    // Raw-penalty equivalent of the scaled convention: P = (ν+1)/(νσ²H).
    const double p = (nu + 1.0) / (nu * sigma * sigma * h);
    const UpdateResult generic = isdf::isd_update(
        m, scalar(y), m.param_vector(scalar(theta_pred)),
        PenaltySpec::static_scalar(p), Vector(), opts);
    ASSERT_NEAR(closed.theta_upd.values[0], generic.theta_upd.values[0], 1e-8)
        << "instance " << i << " (sigma=" << sigma << ", nu=" << nu
        << ", h=" << h << ", e=" << y - theta_pred << ")";
  }
}

TEST(Update, LaplaceShapeUpdateNeverCrossesObservation) {
  // GED with unit shape is the Laplace density: constant score magnitude
  // 1/σ, so the smooth step is θ_pred + 1/(σP) toward y, capped at y.
  const DensityModel m = DensityModel::ged_location(1.0, 1.0);
  const UpdateResult far = isdf::isd_update(
      m, scalar(5.0), m.param_vector(scalar(0.0)), PenaltySpec::static_scalar(1.0));
  EXPECT_NEAR(far.theta_upd.values[0], 1.0, 1e-8);

  Rng rng(31016);
  for (int i = 0; i < 1000; ++i) {
    const double theta_pred = rng.uniform(-2.0, 2.0);
    const double y = theta_pred + rng.uniform(-4.0, 4.0);
    const double p = rng.uniform(0.3, 5.0);
    const UpdateResult res = isdf::isd_update(
        m, scalar(y), m.param_vector(scalar(theta_pred)), PenaltySpec::static_scalar(p));
    const double upd = res.theta_upd.values[0];
    ASSERT_GE(upd, std::min(y, theta_pred) - 1e-10);
    ASSERT_LE(upd, std::max(y, theta_pred) + 1e-10);
  }
}

// ---------------------------------------------------------------------------
// Average Hessian.
// ---------------------------------------------------------------------------

TEST(Update, AverageHessianDegenerateSegment) {
  const DensityModel m = DensityModel::poisson();
  const Vector theta = scalar(0.7);
  const Matrix avg = isdf::compute_average_hessian(
      m, scalar(2.0), m.param_vector(theta), m.param_vector(theta));
  EXPECT_NEAR(avg(0, 0), -m.hessian(theta, scalar(2.0))(0, 0), 1e-14);
}

TEST(Update, AverageHessianConstantIntegrand) {
  const DensityModel m = DensityModel::gaussian_regression(2, 0.9);
  Vector x(2);
  x << 0.4, -1.2;
  Vector a(2), b(2);
  a << 0.0, 0.0;
  b << 2.0, -1.0;
  const Matrix avg = isdf::compute_average_hessian(
      m, scalar(0.3), m.param_vector(a), m.param_vector(b), 32, x);
  const Matrix expected = x * x.transpose() / 0.9;
  EXPECT_LE((avg - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Update, AverageHessianPoissonSegmentIsMeanIntensity) {
  const DensityModel m = DensityModel::poisson();
  const Matrix avg = isdf::compute_average_hessian(
      m, scalar(1.0), m.param_vector(scalar(0.0)), m.param_vector(scalar(1.0)));
  EXPECT_NEAR(avg(0, 0), std::exp(1.0) - 1.0, 1e-10);
}

// ---------------------------------------------------------------------------
// Penalty construction.
// ---------------------------------------------------------------------------

TEST(Update, LyapunovSolveExamples) {
  Matrix delta = Matrix::Identity(2, 2);
  delta(0, 1) = delta(1, 0) = 0.3;
  const Matrix p_zero = isdf::lyapunov_solve(Matrix::Zero(2, 2), delta);
  EXPECT_LE((p_zero - delta).cwiseAbs().maxCoeff(), 1e-14);

  const Matrix p_scalar = isdf::lyapunov_solve(Matrix::Identity(1, 1) * 0.97,
                                               Matrix::Identity(1, 1));
  EXPECT_NEAR(p_scalar(0, 0), 1.0 / (1.0 - 0.97 * 0.97), 1e-10);

  EXPECT_THROW(isdf::lyapunov_solve(Matrix::Identity(1, 1),
                                    Matrix::Identity(1, 1)),
               isdf::SpectralRadiusError);
  EXPECT_THROW(isdf::lyapunov_solve(Matrix::Identity(2, 2) * 1.03,
                                    Matrix::Identity(2, 2)),
               isdf::SpectralRadiusError);
}

TEST(Update, LyapunovResidualOnRandomStableInputs) {
  Rng rng(31017);
  for (int i = 0; i < 100; ++i) {
    const int k = 1 + static_cast<int>(rng.uniform(0.0, 5.0));
    Matrix a(k, k);
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) a(r, c) = rng.normal();
    }
    // Scale below unit spectral radius.
    const double rho = a.eigenvalues().cwiseAbs().maxCoeff();
    const Matrix phi = a * (rng.uniform(0.1, 0.95) / std::max(rho, 1e-9));
    Matrix b(k, k);
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) b(r, c) = rng.normal();
    }
    const Matrix delta = b * b.transpose() + Matrix::Identity(k, k) * 0.1;
    const Matrix p = isdf::lyapunov_solve(phi, delta);
    const double residual =
        (p - phi.transpose() * p * phi - delta).norm() / delta.norm();
    ASSERT_LE(residual, 1e-12) << "instance " << i << " k=" << k;
    EXPECT_LE((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Update, PenaltySpecValidation) {
  Matrix not_spd(2, 2);
  not_spd << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and −1
  EXPECT_THROW(PenaltySpec::static_matrix(not_spd), isdf::ShapeError);
  EXPECT_THROW(PenaltySpec::static_scalar(0.0), isdf::ShapeError);
  EXPECT_THROW(PenaltySpec::static_scalar(-1.0), isdf::ShapeError);
  EXPECT_THROW(PenaltySpec::info_scaled(0.0), isdf::ConfigError);

  const PenaltySpec info = PenaltySpec::info_scaled(0.1);
  EXPECT_TRUE(info.per_step());
  const Matrix resolved = info.resolve(scalar(2.0));
  EXPECT_NEAR(resolved(0, 0), std::exp(1.0) / 0.1, 1e-12);
}

TEST(Update, ScalingSpecFactors) {
  const DensityModel t_loc = DensityModel::t_location(1.1, 2.5);
  const isdf::ScalingSpec def = isdf::ScalingSpec::default_for(t_loc);
  EXPECT_EQ(def.kind, isdf::ScalingSpec::Kind::t_location_scaled);
  EXPECT_NEAR(def.factor(t_loc), 2.5 * 1.1 * 1.1 / 3.5, 1e-14);
  EXPECT_EQ(isdf::ScalingSpec::raw().factor(t_loc), 1.0);

  const DensityModel poisson = DensityModel::poisson();
  EXPECT_EQ(isdf::ScalingSpec::default_for(poisson).kind, isdf::ScalingSpec::Kind::raw);
}

}  // namespace
