#include "config.hpp"

#include "isdf/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace isdfcli {

using isdf::ConfigError;
using isdf::DensityModel;
using isdf::DgpSpec;
using isdf::Family;
using isdf::FilterMode;
using isdf::FilterOptions;
using isdf::FitConfig;
using isdf::Matrix;
using isdf::PenaltySpec;
using isdf::PredictionSpec;
using isdf::ScalingSpec;
using isdf::SolverOptions;
using isdf::StaticParams;
using isdf::Vector;

namespace {

using ConstraintMode = PredictionSpec::ConstraintMode;

std::string constraint_mode_id(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::unconstrained: return "unconstrained";
    case ConstraintMode::positive_diagonal: return "positive_diagonal";
    case ConstraintMode::convex_combination: return "convex_combination";
    case ConstraintMode::identity: return "identity";
  }
  throw ConfigError("unknown prediction constraint mode");
}

ConstraintMode constraint_mode_from_id(const std::string& id, const std::string& path) {
  for (auto mode : {ConstraintMode::unconstrained, ConstraintMode::positive_diagonal,
                    ConstraintMode::convex_combination, ConstraintMode::identity}) {
    if (constraint_mode_id(mode) == id) return mode;
  }
  throw ConfigError(path + ": unknown constraint mode '" + id + "'");
}

std::string scaling_id(const ScalingSpec& scaling) {
  return scaling.kind == ScalingSpec::Kind::raw ? "raw" : "t_location_scaled";
}

ScalingSpec scaling_from_id(const std::string& id, const std::string& path) {
  if (id == "raw") return ScalingSpec::raw();
  if (id == "t_location_scaled") return ScalingSpec::t_location_scaled();
  throw ConfigError(path + ": unknown scaling '" + id + "'");
}

const json& require_object(const json& obj, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  return obj;
}

}  // namespace

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

json json_number(double v) {
  if (std::isfinite(v)) return json(v);
  return json(isdf::format_double(v));
}

Vector as_vector_of_dim(const json& value, int k, const std::string& path) {
  if (value.is_number()) return Vector::Constant(k, value.get<double>());
  Vector v = as_vector(value, path);
  if (v.size() != k) {
    throw ConfigError(path + ": expected " + std::to_string(k) + " entries, found " +
                      std::to_string(v.size()));
  }
  return v;
}

Matrix as_square_matrix(const json& value, int k, const std::string& path) {
  if (value.is_number()) {
    return value.get<double>() * Matrix::Identity(k, k);
  }
  if (value.is_array() && !value.empty() && value[0].is_number()) {
    const Vector diag = as_vector_of_dim(value, k, path);
    return diag.asDiagonal();
  }
  Matrix m = as_matrix(value, path);
  if (m.rows() != k || m.cols() != k) {
    throw ConfigError(path + ": expected a " + std::to_string(k) + "x" +
                      std::to_string(k) + " matrix");
  }
  return m;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw isdf::IoError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min(e.byte, text.size());
    const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

void require_allowed_keys(const json& obj, const std::string& path,
                          std::initializer_list<const char*> allowed) {
  require_object(obj, path);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) {
      std::string known;
      for (const auto& k : ok) {
        if (!known.empty()) known += ", ";
        known += k;
      }
      throw ConfigError(path + ": unknown key '" + item.key() + "' (known keys: " + known + ")");
    }
  }
}

double get_number(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(path + ": missing required key '" + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
  return v.get<double>();
}

double get_number_or(const json& obj, const std::string& path, const char* key,
                     double fallback) {
  return obj.contains(key) ? get_number(obj, path, key) : fallback;
}

int get_int(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(path + ": missing required key '" + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
  return v.get<int>();
}

int get_int_or(const json& obj, const std::string& path, const char* key, int fallback) {
  return obj.contains(key) ? get_int(obj, path, key) : fallback;
}

bool get_bool_or(const json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(path + "." + key + ": expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(path + ": missing required key '" + key + "'");
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

std::string get_string_or(const json& obj, const std::string& path, const char* key,
                          const std::string& fallback) {
  return obj.contains(key) ? get_string(obj, path, key) : fallback;
}

std::uint64_t get_seed_or(const json& obj, const std::string& path, const char* key,
                          std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(path + "." + key + ": expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

Vector as_vector(const json& value, const std::string& path) {
  if (value.is_number()) {
    Vector v(1);
    v[0] = value.get<double>();
    return v;
  }
  if (!value.is_array()) throw ConfigError(path + ": expected a number or an array");
  Vector v(static_cast<Eigen::Index>(value.size()));
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number()) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: expected a number");
    }
    v[static_cast<Eigen::Index>(i)] = value[i].get<double>();
  }
  return v;
}

Matrix as_matrix(const json& value, const std::string& path) {
  if (value.is_number()) {
    Matrix m(1, 1);
    m(0, 0) = value.get<double>();
    return m;
  }
  if (!value.is_array() || value.empty()) {
    throw ConfigError(path + ": expected a number or an array of row arrays");
  }
  const std::size_t rows = value.size();
  if (!value[0].is_array()) throw ConfigError(path + ": expected an array of row arrays");
  const std::size_t cols = value[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = value[i];
    if (!row.is_array() || row.size() != cols) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: ragged row");
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (!row[j].is_number()) {
        throw ConfigError(path + "[" + std::to_string(i) + "][" + std::to_string(j) +
                          "]: expected a number");
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j].get<double>();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

DensityModel build_model(const json& obj, const std::string& path) {
  require_allowed_keys(obj, path, {"family", "shape", "n_components", "n_regressors",
                                   "obs_variance", "taus", "sigma"});
  const std::string family_id = get_string(obj, path, "family");
  const Family family = isdf::family_from_id(family_id);

  auto forbid = [&](const char* key, const char* applies_to) {
    if (obj.contains(key)) {
      throw ConfigError(path + "." + key + ": applies only to " + applies_to);
    }
  };

  switch (family) {
    case Family::dirichlet_log_concentration: {
      forbid("shape", "families with shape parameters");
      forbid("n_regressors", "the regression family");
      forbid("obs_variance", "the gaussian-location and regression families");
      forbid("taus", "the quantile family");
      forbid("sigma", "the quantile family");
      const int n = get_int(obj, path, "n_components");
      return DensityModel::dirichlet(n);
    }
    case Family::gaussian_regression: {
      forbid("shape", "families with shape parameters");
      forbid("n_components", "the dirichlet family");
      forbid("taus", "the quantile family");
      forbid("sigma", "the quantile family");
      const int p = get_int(obj, path, "n_regressors");
      const double ov = get_number_or(obj, path, "obs_variance", 1.0);
      return DensityModel::gaussian_regression(p, ov);
    }
    case Family::gaussian_location: {
      forbid("shape", "families with shape parameters");
      forbid("n_components", "the dirichlet family");
      forbid("n_regressors", "the regression family");
      forbid("taus", "the quantile family");
      forbid("sigma", "the quantile family");
      const double ov = get_number_or(obj, path, "obs_variance", 1.0);
      return DensityModel::gaussian_location(ov);
    }
    case Family::asymmetric_laplace_quantile: {
      forbid("shape", "families with shape parameters");
      forbid("n_components", "the dirichlet family");
      forbid("n_regressors", "the regression family");
      forbid("obs_variance", "the gaussian-location and regression families");
      if (!obj.contains("taus")) {
        throw ConfigError(path + ": missing required key 'taus'");
      }
      const Vector taus = as_vector(obj.at("taus"), path + ".taus");
      const double sigma = get_number_or(obj, path, "sigma", 1.0);
      return DensityModel::quantiles(
          std::vector<double>(taus.data(), taus.data() + taus.size()), sigma);
    }
    default: {
      forbid("n_components", "the dirichlet family");
      forbid("n_regressors", "the regression family");
      forbid("obs_variance", "the gaussian-location and regression families");
      forbid("taus", "the quantile family");
      forbid("sigma", "the quantile family");
      DensityModel model = DensityModel::from_id(family_id);
      if (obj.contains("shape")) {
        model = model.with_shape(as_vector(obj.at("shape"), path + ".shape"));
      }
      return model;
    }
  }
}

json model_to_json(const DensityModel& model) {
  json out;
  out["family"] = isdf::family_id(model.family());
  switch (model.family()) {
    case Family::dirichlet_log_concentration:
      out["n_components"] = model.obs_dim();
      break;
    case Family::gaussian_regression:
      out["n_regressors"] = model.exo_dim();
      out["obs_variance"] = model.shape()[0];
      break;
    case Family::gaussian_location:
      out["obs_variance"] = model.shape()[0];
      break;
    case Family::asymmetric_laplace_quantile: {
      out["sigma"] = model.shape()[0];
      json taus = json::array();
      for (Eigen::Index i = 1; i < model.shape().size(); ++i) {
        taus.push_back(model.shape()[i]);
      }
      out["taus"] = taus;
      break;
    }
    default:
      if (model.shape().size() > 0) out["shape"] = vector_to_json(model.shape());
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// statics
// ---------------------------------------------------------------------------

StaticParams build_statics(const json& obj, const DensityModel& model,
                           const std::string& path) {
  require_allowed_keys(obj, path, {"penalty", "prediction", "psi", "init"});

  StaticParams statics;
  DensityModel shaped = model;
  if (obj.contains("psi")) {
    statics.psi = as_vector(obj.at("psi"), path + ".psi");
    shaped = model.with_shape(statics.psi);
  }
  const int k = shaped.param_dim();

  // scalar_h is interpreted in the family's default score scaling; a custom
  // weighting is expressed directly via the static_matrix kind.
  const ScalingSpec scaling = ScalingSpec::default_for(shaped);

  // Prediction first: the Lyapunov penalty form needs the autoregression.
  if (!obj.contains("prediction")) {
    throw ConfigError(path + ": missing required key 'prediction'");
  }
  {
    const json& pred = require_object(obj.at("prediction"), path + ".prediction");
    const std::string ppath = path + ".prediction";
    require_allowed_keys(pred, ppath, {"mode", "omega", "phi", "phi_diag", "c"});
    const ConstraintMode mode =
        constraint_mode_from_id(get_string_or(pred, ppath, "mode", "unconstrained"), ppath + ".mode");
    auto omega = [&]() {
      if (!pred.contains("omega")) {
        throw ConfigError(ppath + ": missing required key 'omega'");
      }
      return as_vector_of_dim(pred.at("omega"), k, ppath + ".omega");
    };
    switch (mode) {
      case ConstraintMode::unconstrained: {
        if (!pred.contains("phi")) throw ConfigError(ppath + ": missing required key 'phi'");
        statics.prediction = PredictionSpec::unconstrained(
            omega(), as_square_matrix(pred.at("phi"), k, ppath + ".phi"));
        break;
      }
      case ConstraintMode::positive_diagonal: {
        if (!pred.contains("phi_diag")) {
          throw ConfigError(ppath + ": missing required key 'phi_diag'");
        }
        statics.prediction = PredictionSpec::positive_diagonal(
            omega(), as_vector_of_dim(pred.at("phi_diag"), k, ppath + ".phi_diag"));
        break;
      }
      case ConstraintMode::convex_combination:
        statics.prediction =
            PredictionSpec::convex_combination(omega(), get_number(pred, ppath, "c"));
        break;
      case ConstraintMode::identity:
        statics.prediction = PredictionSpec::identity(k);
        break;
    }
    statics.prediction.validate(shaped.domain());
  }

  if (!obj.contains("penalty")) {
    throw ConfigError(path + ": missing required key 'penalty'");
  }
  {
    const json& pen = require_object(obj.at("penalty"), path + ".penalty");
    const std::string qpath = path + ".penalty";
    require_allowed_keys(pen, qpath, {"kind", "h", "p", "matrix", "delta"});
    const std::string kind = get_string(pen, qpath, "kind");
    if (kind == "scalar_h") {
      const double h = get_number(pen, qpath, "h");
      if (!(h > 0.0)) throw ConfigError(qpath + ".h: must be positive");
      const double m = scaling.factor(shaped);
      statics.penalty =
          PenaltySpec::static_matrix(Matrix::Identity(k, k) / (h * m));
      statics.scalar_h = h;
    } else if (kind == "static_scalar") {
      if (k != 1) {
        throw ConfigError(qpath + ": static_scalar applies to one-parameter models; "
                          "use kind 'static_matrix'");
      }
      statics.penalty = PenaltySpec::static_scalar(get_number(pen, qpath, "p"));
    } else if (kind == "static_matrix") {
      if (!pen.contains("matrix")) {
        throw ConfigError(qpath + ": missing required key 'matrix'");
      }
      statics.penalty = PenaltySpec::static_matrix(
          as_square_matrix(pen.at("matrix"), k, qpath + ".matrix"));
    } else if (kind == "lyapunov") {
      if (!pen.contains("delta")) {
        throw ConfigError(qpath + ": missing required key 'delta'");
      }
      statics.penalty = PenaltySpec::lyapunov(
          as_square_matrix(pen.at("delta"), k, qpath + ".delta"),
          statics.prediction.phi);
    } else if (kind == "info_scaled") {
      const double h = get_number(pen, qpath, "h");
      statics.penalty = PenaltySpec::info_scaled(h);
      statics.scalar_h = h;
    } else {
      throw ConfigError(qpath + ".kind: unknown penalty kind '" + kind + "'");
    }
  }

  if (obj.contains("init")) {
    statics.init = as_vector_of_dim(obj.at("init"), k, path + ".init");
  }
  return statics;
}

json statics_to_json(const StaticParams& statics, const DensityModel& model) {
  DensityModel shaped = model;
  if (statics.psi.size() > 0) shaped = model.with_shape(statics.psi);

  json out;
  json pen;
  bool emitted = false;
  if (statics.scalar_h && statics.penalty.kind == PenaltySpec::Kind::static_matrix) {
    // Emit the scalar shorthand only when it reconstructs the stored matrix.
    const int k = shaped.param_dim();
    const double m = ScalingSpec::default_for(shaped).factor(shaped);
    const Matrix expected = Matrix::Identity(k, k) / (*statics.scalar_h * m);
    if ((statics.penalty.P - expected).norm() <= 1e-12 * (1.0 + expected.norm())) {
      pen["kind"] = "scalar_h";
      pen["h"] = *statics.scalar_h;
      emitted = true;
    }
  }
  if (emitted) {
    // shorthand above
  } else if (statics.penalty.kind == PenaltySpec::Kind::info_scaled) {
    pen["kind"] = "info_scaled";
    pen["h"] = statics.penalty.h;
  } else if (statics.penalty.kind == PenaltySpec::Kind::lyapunov) {
    pen["kind"] = "lyapunov";
    pen["delta"] = matrix_to_json(statics.penalty.delta);
  } else {
    pen["kind"] = "static_matrix";
    pen["matrix"] = matrix_to_json(statics.penalty.P);
  }
  out["penalty"] = pen;

  json pred;
  const auto mode = statics.prediction.constraint_mode;
  pred["mode"] = constraint_mode_id(mode);
  if (mode != ConstraintMode::identity) {
    pred["omega"] = vector_to_json(statics.prediction.omega);
    if (mode == ConstraintMode::positive_diagonal) {
      pred["phi_diag"] = vector_to_json(statics.prediction.phi.diagonal());
    } else if (mode == ConstraintMode::convex_combination) {
      pred["c"] = statics.prediction.phi(0, 0);
    } else {
      pred["phi"] = matrix_to_json(statics.prediction.phi);
    }
  }
  out["prediction"] = pred;

  if (statics.psi.size() > 0) out["psi"] = vector_to_json(statics.psi);
  if (statics.init) out["init"] = vector_to_json(*statics.init);
  return out;
}

// ---------------------------------------------------------------------------
// dgp
// ---------------------------------------------------------------------------

DgpSpec build_dgp(const json& obj, const StaticParams* statics,
                  std::uint64_t default_seed, const std::string& path) {
  require_allowed_keys(obj, path, {"kind", "T", "seed", "omega0", "phi0", "sigma_eta",
                                   "innovation", "nu0", "burn_in"});
  const std::string kind = get_string(obj, path, "kind");
  const int T = get_int(obj, path, "T");
  if (T <= 0) throw ConfigError(path + ".T: must be positive");
  const std::uint64_t seed = get_seed_or(obj, path, "seed", default_seed);

  auto forbid_ar1_keys = [&](const char* for_kind) {
    for (const char* key : {"omega0", "phi0", "sigma_eta", "burn_in"}) {
      if (obj.contains(key)) {
        throw ConfigError(path + "." + key + ": does not apply to kind '" +
                          std::string(for_kind) + "'");
      }
    }
  };
  auto forbid_innovation_keys = [&](const char* for_kind) {
    for (const char* key : {"innovation", "nu0"}) {
      if (obj.contains(key)) {
        throw ConfigError(path + "." + key + ": does not apply to kind '" +
                          std::string(for_kind) + "'");
      }
    }
  };
  auto innovation = [&]() {
    const std::string id = get_string_or(obj, path, "innovation", "gaussian");
    if (id == "gaussian") return DgpSpec::Innovation::gaussian;
    if (id == "student_t") return DgpSpec::Innovation::student_t;
    throw ConfigError(path + ".innovation: unknown innovation '" + id + "'");
  };

  if (kind == "isd_dgp") {
    forbid_ar1_keys(kind.c_str());
    forbid_innovation_keys(kind.c_str());
    if (statics == nullptr) {
      throw ConfigError(path + ": kind 'isd_dgp' needs a top-level 'statics' section");
    }
    return DgpSpec::isd(*statics, T, seed);
  }
  if (kind == "ar1_state") {
    DgpSpec spec = DgpSpec::ar1(get_number_or(obj, path, "omega0", 0.0),
                                get_number_or(obj, path, "phi0", 0.98),
                                get_number_or(obj, path, "sigma_eta", 0.15), T, seed,
                                innovation(), get_number_or(obj, path, "nu0", 5.0));
    spec.burn_in = get_int_or(obj, path, "burn_in", 0);
    if (spec.burn_in < 0) throw ConfigError(path + ".burn_in: must be nonnegative");
    return spec;
  }
  if (kind == "square_wave_gamma") {
    forbid_ar1_keys(kind.c_str());
    forbid_innovation_keys(kind.c_str());
    return DgpSpec::square_wave(T, seed);
  }
  if (kind == "dirichlet_ar1") {
    forbid_ar1_keys(kind.c_str());
    return DgpSpec::dirichlet_ar1(T, seed, innovation(),
                                  get_number_or(obj, path, "nu0", 5.0));
  }
  throw ConfigError(path + ".kind: unknown DGP kind '" + kind + "'");
}

json dgp_to_json(const DgpSpec& dgp) {
  json out;
  switch (dgp.kind) {
    case DgpSpec::Kind::isd_dgp: out["kind"] = "isd_dgp"; break;
    case DgpSpec::Kind::ar1_state: out["kind"] = "ar1_state"; break;
    case DgpSpec::Kind::square_wave_gamma: out["kind"] = "square_wave_gamma"; break;
    case DgpSpec::Kind::dirichlet_ar1: out["kind"] = "dirichlet_ar1"; break;
  }
  out["T"] = dgp.T;
  out["seed"] = dgp.seed;
  if (dgp.kind == DgpSpec::Kind::ar1_state) {
    out["omega0"] = dgp.omega0;
    out["phi0"] = dgp.phi0;
    out["sigma_eta"] = dgp.sigma_eta;
    out["burn_in"] = dgp.burn_in;
  }
  if (dgp.kind == DgpSpec::Kind::ar1_state || dgp.kind == DgpSpec::Kind::dirichlet_ar1) {
    out["innovation"] =
        dgp.innovation == DgpSpec::Innovation::gaussian ? "gaussian" : "student_t";
    out["nu0"] = dgp.nu0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

namespace {

SolverOptions build_solver_options(const json& obj, const std::string& path) {
  require_allowed_keys(obj, path, {"foc_tol", "max_newton_iters", "max_bisect_iters",
                                   "multistart", "quadrature_nodes"});
  SolverOptions solver;
  solver.foc_tol = get_number_or(obj, path, "foc_tol", solver.foc_tol);
  solver.max_newton_iters = get_int_or(obj, path, "max_newton_iters", solver.max_newton_iters);
  solver.max_bisect_iters = get_int_or(obj, path, "max_bisect_iters", solver.max_bisect_iters);
  solver.multistart = get_bool_or(obj, path, "multistart", solver.multistart);
  solver.quadrature_nodes = get_int_or(obj, path, "quadrature_nodes", solver.quadrature_nodes);
  return solver;
}

json solver_options_to_json(const SolverOptions& solver) {
  json out;
  out["foc_tol"] = solver.foc_tol;
  out["max_newton_iters"] = solver.max_newton_iters;
  out["max_bisect_iters"] = solver.max_bisect_iters;
  out["multistart"] = solver.multistart;
  out["quadrature_nodes"] = solver.quadrature_nodes;
  return out;
}

}  // namespace

FitConfig build_fit(const json& obj, std::uint64_t default_seed, const std::string& path) {
  require_allowed_keys(
      obj, path,
      {"mode", "penalty_kind", "constraint", "scaling", "starts", "max_iters", "fd_step",
       "tolerance", "jitter", "seed", "divergence_penalty", "overflow_guard", "solver",
       "pin_omega", "pin_phi", "pin_h", "pin_psi", "estimate_psi", "estimate_init",
       "init_theta", "start"});

  FitConfig fit;
  fit.mode = isdf::filter_mode_from_id(get_string_or(obj, path, "mode", "isd"));
  fit.penalty_kind =
      isdf::penalty_kind_from_id(get_string_or(obj, path, "penalty_kind", "scalar_h"));
  fit.constraint_mode = constraint_mode_from_id(
      get_string_or(obj, path, "constraint", "unconstrained"), path + ".constraint");
  if (obj.contains("scaling")) {
    fit.scaling = scaling_from_id(get_string(obj, path, "scaling"), path + ".scaling");
  }
  fit.starts = get_int_or(obj, path, "starts", fit.starts);
  fit.max_iters = get_int_or(obj, path, "max_iters", fit.max_iters);
  fit.fd_step = get_number_or(obj, path, "fd_step", fit.fd_step);
  fit.tolerance = get_number_or(obj, path, "tolerance", fit.tolerance);
  fit.jitter = get_number_or(obj, path, "jitter", fit.jitter);
  fit.seed = get_seed_or(obj, path, "seed", default_seed);
  fit.divergence_penalty =
      get_number_or(obj, path, "divergence_penalty", fit.divergence_penalty);
  fit.overflow_guard = get_number_or(obj, path, "overflow_guard", fit.overflow_guard);
  if (obj.contains("solver")) {
    fit.solver = build_solver_options(obj.at("solver"), path + ".solver");
  }
  if (obj.contains("pin_omega")) {
    fit.pin_omega = as_vector(obj.at("pin_omega"), path + ".pin_omega");
  }
  if (obj.contains("pin_phi")) fit.pin_phi = get_number(obj, path, "pin_phi");
  if (obj.contains("pin_h")) fit.pin_h = get_number(obj, path, "pin_h");
  if (obj.contains("pin_psi")) {
    const json& pins = require_object(obj.at("pin_psi"), path + ".pin_psi");
    for (const auto& item : pins.items()) {
      int index = -1;
      try {
        std::size_t pos = 0;
        index = std::stoi(item.key(), &pos);
        if (pos != item.key().size()) index = -1;
      } catch (const std::exception&) {
        index = -1;
      }
      if (index < 0) {
        throw ConfigError(path + ".pin_psi: keys must be nonnegative shape indices, got '" +
                          item.key() + "'");
      }
      if (!item.value().is_number()) {
        throw ConfigError(path + ".pin_psi." + item.key() + ": expected a number");
      }
      fit.pin_psi.emplace_back(index, item.value().get<double>());
    }
  }
  fit.estimate_psi = get_bool_or(obj, path, "estimate_psi", fit.estimate_psi);
  fit.estimate_init = get_bool_or(obj, path, "estimate_init", fit.estimate_init);
  if (obj.contains("init_theta")) {
    fit.init_theta = as_vector(obj.at("init_theta"), path + ".init_theta");
  }
  if (obj.contains("start")) {
    fit.start = as_vector(obj.at("start"), path + ".start");
  }
  return fit;
}

json fit_to_json(const FitConfig& fit) {
  json out;
  out["mode"] = isdf::filter_mode_id(fit.mode);
  out["penalty_kind"] = isdf::penalty_kind_id(fit.penalty_kind);
  out["constraint"] = constraint_mode_id(fit.constraint_mode);
  if (fit.scaling) out["scaling"] = scaling_id(*fit.scaling);
  out["starts"] = fit.starts;
  out["max_iters"] = fit.max_iters;
  out["fd_step"] = fit.fd_step;
  out["tolerance"] = fit.tolerance;
  out["jitter"] = fit.jitter;
  out["seed"] = fit.seed;
  out["divergence_penalty"] = fit.divergence_penalty;
  out["overflow_guard"] = fit.overflow_guard;
  out["solver"] = solver_options_to_json(fit.solver);
  if (fit.pin_omega) out["pin_omega"] = vector_to_json(*fit.pin_omega);
  if (fit.pin_phi) out["pin_phi"] = *fit.pin_phi;
  if (fit.pin_h) out["pin_h"] = *fit.pin_h;
  if (!fit.pin_psi.empty()) {
    json pins;
    for (const auto& [index, value] : fit.pin_psi) pins[std::to_string(index)] = value;
    out["pin_psi"] = pins;
  }
  out["estimate_psi"] = fit.estimate_psi;
  out["estimate_init"] = fit.estimate_init;
  if (fit.init_theta) out["init_theta"] = vector_to_json(*fit.init_theta);
  if (fit.start) out["start"] = vector_to_json(*fit.start);
  return out;
}

// ---------------------------------------------------------------------------
// filter options
// ---------------------------------------------------------------------------

FilterOptions build_filter_options(const json* obj, const std::string& path) {
  FilterOptions opts;
  if (obj == nullptr) return opts;
  require_allowed_keys(*obj, path, {"mode", "fail_fast", "overflow_guard", "solver"});
  opts.mode = isdf::filter_mode_from_id(get_string_or(*obj, path, "mode", "isd"));
  opts.fail_fast = get_bool_or(*obj, path, "fail_fast", opts.fail_fast);
  opts.overflow_guard = get_number_or(*obj, path, "overflow_guard", opts.overflow_guard);
  if (obj->contains("solver")) {
    opts.solver = build_solver_options(obj->at("solver"), path + ".solver");
  }
  return opts;
}

json filter_options_to_json(const FilterOptions& opts) {
  json out;
  out["mode"] = isdf::filter_mode_id(opts.mode);
  out["fail_fast"] = opts.fail_fast;
  out["overflow_guard"] = opts.overflow_guard;
  out["solver"] = solver_options_to_json(opts.solver);
  return out;
}

}  // namespace isdfcli
