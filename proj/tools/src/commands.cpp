#include "commands.hpp"

#include "config.hpp"

#include "isdf/diagnostics.hpp"
#include "isdf/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace isdfcli {

namespace fs = std::filesystem;

using isdf::ConfigError;
using isdf::ContractionKind;
using isdf::DensityModel;
using isdf::DgpSpec;
using isdf::FilterOptions;
using isdf::FitConfig;
using isdf::IoError;
using isdf::Matrix;
using isdf::StaticParams;
using isdf::Vector;

namespace {

// ---------------------------------------------------------------------------
// run scaffolding shared by every command
// ---------------------------------------------------------------------------

struct RunContext {
  json config;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string data_path;  ///< io.data ("" when absent)
  std::string exo_path;   ///< io.exo ("" when absent)
  fs::path out_dir;
  json echo;  ///< resolved configuration under construction
};

int resolve_threads(const json& config) {
  int threads = 1;
  if (const char* env = std::getenv("ISDF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 4096) {
      threads = static_cast<int>(v);
    } else {
      std::fprintf(stderr, "warning: ignoring invalid ISDF_THREADS value '%s'\n", env);
    }
  }
  if (config.contains("threads")) {
    const int v = get_int(config, "$", "threads");
    if (v < 1) throw ConfigError("$.threads: must be at least 1");
    threads = v;
  }
  return threads;
}

RunContext prepare(const CommonArgs& args, const char* command,
                   std::initializer_list<const char*> allowed_keys) {
  RunContext ctx;
  ctx.config = load_config_file(args.config_path);
  require_allowed_keys(ctx.config, "$", allowed_keys);

  // A resolved echo names its command; re-ingesting it under a different
  // subcommand is almost certainly a mistake.
  if (ctx.config.contains("command")) {
    const std::string recorded = get_string(ctx.config, "$", "command");
    if (recorded != command) {
      throw ConfigError("$.command: config was written for '" + recorded +
                        "' but invoked as '" + std::string(command) + "'");
    }
  }

  ctx.seed = get_seed_or(ctx.config, "$", "seed", 1);
  ctx.threads = resolve_threads(ctx.config);

  std::string out = args.out_dir;
  if (ctx.config.contains("io")) {
    const json& io = ctx.config.at("io");
    require_allowed_keys(io, "$.io", {"data", "exo", "out"});
    ctx.data_path = get_string_or(io, "$.io", "data", "");
    ctx.exo_path = get_string_or(io, "$.io", "exo", "");
    if (out.empty()) out = get_string_or(io, "$.io", "out", "");
  }
  if (out.empty()) {
    throw ConfigError("$.io.out: no output directory (set io.out or pass -o/--out)");
  }
  ctx.out_dir = fs::path(out);
  try {
    fs::create_directories(ctx.out_dir);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create output directory '" + out + "': " + e.what());
  }

  ctx.echo["command"] = command;
  ctx.echo["seed"] = ctx.seed;
  ctx.echo["threads"] = ctx.threads;
  json io_echo;
  if (!ctx.data_path.empty()) io_echo["data"] = ctx.data_path;
  if (!ctx.exo_path.empty()) io_echo["exo"] = ctx.exo_path;
  io_echo["out"] = out;
  ctx.echo["io"] = io_echo;
  return ctx;
}

void write_json_file(const fs::path& path, const json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void finish(const RunContext& ctx) {
  write_json_file(ctx.out_dir / "resolved-config.json", ctx.echo);
}

const json& require_section(const json& config, const char* key) {
  if (!config.contains(key)) {
    throw ConfigError(std::string("$: missing required section '") + key + "'");
  }
  return config.at(key);
}

DensityModel model_from(const RunContext& ctx) {
  return build_model(require_section(ctx.config, "model"), "$.model");
}

Matrix read_table(const std::string& path) { return isdf::read_csv(path).data; }

Matrix maybe_read_exo(const RunContext& ctx) {
  return ctx.exo_path.empty() ? Matrix() : read_table(ctx.exo_path);
}

std::vector<std::string> indexed_headers(const std::string& stem, Eigen::Index n) {
  std::vector<std::string> headers;
  headers.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) headers.push_back(stem + std::to_string(i + 1));
  return headers;
}

json named_map_to_json(const std::map<std::string, double>& values) {
  json out = json::object();
  for (const auto& [name, value] : values) out[name] = json_number(value);
  return out;
}

// ---------------------------------------------------------------------------
// fit / filter serialization pieces
// ---------------------------------------------------------------------------

json fit_report_to_json(const isdf::FitReport& report, std::uint64_t seed) {
  json out;
  out["converged"] = report.converged;
  out["objective"] = json_number(report.objective);
  out["total_loglik"] = json_number(report.total_loglik);
  out["function_evals"] = report.function_evals;
  out["best_start"] = report.best_start;
  out["seed"] = seed;
  json starts = json::array();
  for (const auto& s : report.starts) {
    json row;
    row["f_start"] = json_number(s.f_start);
    row["f_end"] = json_number(s.f_end);
    row["iterations"] = s.iterations;
    row["converged"] = s.converged;
    if (!s.note.empty()) row["note"] = s.note;
    row["z_start"] = vector_to_json(s.z_start);
    row["z_end"] = vector_to_json(s.z_end);
    starts.push_back(row);
  }
  out["starts"] = starts;
  return out;
}

json xi_hat_to_json(const StaticParams& statics, const isdf::FitReport& report,
                    const DensityModel& model) {
  json out;
  out["estimates"] = named_map_to_json(report.estimates);
  out["statics"] = statics_to_json(statics, model);
  out["names"] = report.names;
  out["z_hat"] = vector_to_json(report.z_hat);
  return out;
}

void write_filter_path_csv(const fs::path& path, const isdf::FilterPath& result) {
  const Eigen::Index T = result.predictions.rows();
  const Eigen::Index k = result.predictions.cols();
  std::vector<std::string> headers;
  headers.emplace_back("t");
  for (const auto& h : indexed_headers("pred_", k)) headers.push_back(h);
  for (const auto& h : indexed_headers("upd_", k)) headers.push_back(h);
  headers.emplace_back("loglik");
  headers.emplace_back("diverged");

  Matrix table(T, 1 + 2 * k + 2);
  for (Eigen::Index t = 0; t < T; ++t) {
    table(t, 0) = static_cast<double>(t);
    table.block(t, 1, 1, k) = result.predictions.row(t);
    table.block(t, 1 + k, 1, k) = result.updates.row(t);
    table(t, 1 + 2 * k) = result.loglik_contribs[t];
    const bool off = result.diverged && result.first_divergence_index >= 0 &&
                     t >= result.first_divergence_index;
    table(t, 2 + 2 * k) = off ? 1.0 : 0.0;
  }
  isdf::write_csv(path.string(), headers, table);
}

// ---------------------------------------------------------------------------
// diagnose helpers
// ---------------------------------------------------------------------------

ContractionKind contraction_kind_from_id(const std::string& id, const std::string& path) {
  for (ContractionKind kind :
       {ContractionKind::update_shrinkage, ContractionKind::implicit_update_stability,
        ContractionKind::explicit_update_stability, ContractionKind::prediction_contraction,
        ContractionKind::noise_region_contraction}) {
    if (isdf::contraction_kind_id(kind) == id) return kind;
  }
  throw ConfigError(path + ": unknown contraction kind '" + id + "'");
}

/// Run one diagnostics request, reporting mathematical failures (e.g. a
/// non-contractive configuration) in-band as an "error" field while letting
/// configuration mistakes abort the run.
template <typename Fn>
json guarded_entry(const json& request, Fn&& fn) {
  json out = request;
  try {
    fn(out);
  } catch (const ConfigError&) {
    throw;
  } catch (const IoError&) {
    throw;
  } catch (const isdf::Error& e) {
    out["error"] = e.what();
  }
  return out;
}

json diagnose_contraction(const json& entries, const std::string& path) {
  json results = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    const json& entry = entries[i];
    require_allowed_keys(entry, epath, {"kind", "p", "alpha", "phi", "lipschitz"});
    const ContractionKind kind =
        contraction_kind_from_id(get_string(entry, epath, "kind"), epath + ".kind");
    if (!entry.contains("p")) throw ConfigError(epath + ": missing required key 'p'");
    const Matrix p = as_matrix(entry.at("p"), epath + ".p");
    const double alpha = get_number(entry, epath, "alpha");
    Matrix phi;
    if (entry.contains("phi")) {
      phi = as_square_matrix(entry.at("phi"), static_cast<int>(p.rows()), epath + ".phi");
    }
    const double lipschitz = get_number_or(entry, epath, "lipschitz", 0.0);
    results.push_back(guarded_entry(entry, [&](json& out) {
      const isdf::ContractionReport report =
          isdf::contraction_report(kind, p, alpha, phi, lipschitz);
      out["coefficient"] = report.coefficient;
      out["lambda_max_p"] = report.lambda_max_p;
      out["lambda_min_p"] = report.lambda_min_p;
      if (kind == ContractionKind::prediction_contraction) {
        out["lambda_min_gap"] = report.lambda_min_gap;
      }
    }));
  }
  return results;
}

json diagnose_ndr(const json& entries, const std::string& path) {
  json results = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    const json& entry = entries[i];
    require_allowed_keys(entry, epath, {"sigma2", "p", "alpha"});
    const double sigma2 = get_number(entry, epath, "sigma2");
    const double p = get_number(entry, epath, "p");
    const double alpha = get_number(entry, epath, "alpha");
    results.push_back(guarded_entry(entry, [&](json& out) {
      out["radius_sq"] = isdf::ndr_radius_sq(sigma2, p, alpha);
    }));
  }
  return results;
}

json diagnose_invertibility(const json& entries, const std::string& path) {
  json results = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    const json& entry = entries[i];
    require_allowed_keys(entry, epath, {"p", "phi", "alpha"});
    if (!entry.contains("p")) throw ConfigError(epath + ": missing required key 'p'");
    if (!entry.contains("phi")) throw ConfigError(epath + ": missing required key 'phi'");
    const Matrix p = as_matrix(entry.at("p"), epath + ".p");
    const Matrix phi =
        as_square_matrix(entry.at("phi"), static_cast<int>(p.rows()), epath + ".phi");
    const double alpha = get_number(entry, epath, "alpha");
    results.push_back(guarded_entry(entry, [&](json& out) {
      const isdf::InvertibilityCertificate cert = isdf::invertibility_certificate(p, phi, alpha);
      out["certified"] = cert.certified;
      out["kappa"] = cert.kappa_value;
      out["log_decay_per_step"] = json_number(cert.log_decay_per_step);
    }));
  }
  return results;
}

json diagnose_t_location_bound(const json& entries, const std::string& path) {
  json results = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    const json& entry = entries[i];
    require_allowed_keys(entry, epath, {"h", "sigma", "nu"});
    const double h = get_number(entry, epath, "h");
    const double sigma = get_number(entry, epath, "sigma");
    const double nu = get_number(entry, epath, "nu");
    results.push_back(guarded_entry(entry, [&](json& out) {
      out["bound"] = isdf::t_location_stability_bound(h, sigma, nu);
    }));
  }
  return results;
}

json diagnose_cauchy_moments(const json& entries, const std::string& path) {
  json results = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    const json& entry = entries[i];
    require_allowed_keys(entry, epath, {"mu", "sigma", "nu", "gamma"});
    const double mu = get_number(entry, epath, "mu");
    const double sigma = get_number(entry, epath, "sigma");
    const double nu = get_number(entry, epath, "nu");
    const double gamma = get_number(entry, epath, "gamma");
    results.push_back(guarded_entry(entry, [&](json& out) {
      const isdf::ScoreMoments moments = isdf::cauchy_t_score_moments(mu, sigma, nu, gamma);
      out["m1"] = moments.m1;
      out["m2"] = moments.m2;
    }));
  }
  return results;
}

json diagnose_mse_curve(const json& entries, const std::string& path) {
  json results = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    const json& entry = entries[i];
    require_allowed_keys(entry, epath, {"h", "gamma", "sigma", "nu", "se_grid"});
    const double h = get_number(entry, epath, "h");
    const double gamma = get_number(entry, epath, "gamma");
    const double sigma = get_number(entry, epath, "sigma");
    const double nu = get_number(entry, epath, "nu");
    if (!entry.contains("se_grid")) {
      throw ConfigError(epath + ": missing required key 'se_grid'");
    }
    const Vector grid = as_vector(entry.at("se_grid"), epath + ".se_grid");
    results.push_back(guarded_entry(entry, [&](json& out) {
      const std::vector<double> post = isdf::mse_curve_nonconcave(
          h, gamma, sigma, nu, std::vector<double>(grid.data(), grid.data() + grid.size()));
      json arr = json::array();
      for (double v : post) arr.push_back(json_number(v));
      out["post_mse"] = arr;
    }));
  }
  return results;
}

json diagnose_mse_decomposition(const json& entries, const std::string& path,
                                std::uint64_t default_seed) {
  json results = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    const json& entry = entries[i];
    require_allowed_keys(entry, epath,
                         {"model", "theta_star", "theta_pred", "p", "n_draws", "seed", "mode"});
    const DensityModel model =
        build_model(require_section(entry, "model"), epath + ".model");
    const int k = model.param_dim();
    if (!entry.contains("theta_star")) {
      throw ConfigError(epath + ": missing required key 'theta_star'");
    }
    if (!entry.contains("theta_pred")) {
      throw ConfigError(epath + ": missing required key 'theta_pred'");
    }
    if (!entry.contains("p")) throw ConfigError(epath + ": missing required key 'p'");
    const Vector theta_star = as_vector_of_dim(entry.at("theta_star"), k, epath + ".theta_star");
    const Vector theta_pred = as_vector_of_dim(entry.at("theta_pred"), k, epath + ".theta_pred");
    const Matrix p = as_square_matrix(entry.at("p"), k, epath + ".p");
    const int n_draws = get_int_or(entry, epath, "n_draws", 100000);
    const std::uint64_t seed = get_seed_or(entry, epath, "seed", default_seed);
    const isdf::FilterMode mode =
        isdf::filter_mode_from_id(get_string_or(entry, epath, "mode", "isd"));
    results.push_back(guarded_entry(entry, [&](json& out) {
      const isdf::MseDecomposition d =
          isdf::verify_mse_decomposition(model, theta_star, theta_pred, p, n_draws, seed, mode);
      out["mse_after"] = json_number(d.mse_after);
      out["se_before"] = json_number(d.se_before);
      out["contractive"] = json_number(d.contractive);
      out["expansive"] = json_number(d.expansive);
      out["residual"] = json_number(d.residual);
      out["mc_standard_error"] = json_number(d.mc_standard_error);
      out["n_draws"] = d.n_draws;
    }));
  }
  return results;
}

}  // namespace

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

void cmd_simulate(const CommonArgs& args) {
  RunContext ctx = prepare(args, "simulate",
                           {"command", "seed", "threads", "io", "model", "statics", "dgp"});
  const DensityModel model = model_from(ctx);

  std::optional<StaticParams> statics;
  if (ctx.config.contains("statics")) {
    statics = build_statics(ctx.config.at("statics"), model, "$.statics");
  }
  const DgpSpec dgp = build_dgp(require_section(ctx.config, "dgp"),
                                statics ? &*statics : nullptr, ctx.seed, "$.dgp");

  const isdf::SimulationResult result = isdf::simulate(model, dgp);

  const std::vector<std::string> y_headers =
      result.y.cols() == 1 ? std::vector<std::string>{"y"}
                           : indexed_headers("y", result.y.cols());
  isdf::write_csv((ctx.out_dir / "y.csv").string(), y_headers, result.y);
  isdf::write_csv((ctx.out_dir / "theta0.csv").string(),
                  indexed_headers("theta", result.theta0.cols()), result.theta0);

  ctx.echo["model"] = model_to_json(model);
  if (statics) ctx.echo["statics"] = statics_to_json(*statics, model);
  ctx.echo["dgp"] = dgp_to_json(dgp);
  finish(ctx);
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

void cmd_fit(const CommonArgs& args) {
  RunContext ctx =
      prepare(args, "fit", {"command", "seed", "threads", "io", "model", "fit"});
  if (ctx.data_path.empty()) {
    throw ConfigError("$.io.data: the fit command needs an observation CSV");
  }
  const DensityModel model = model_from(ctx);
  FitConfig fit_config = ctx.config.contains("fit")
                             ? build_fit(ctx.config.at("fit"), ctx.seed, "$.fit")
                             : FitConfig{};
  if (!ctx.config.contains("fit")) fit_config.seed = ctx.seed;

  const Matrix data = read_table(ctx.data_path);
  const Matrix exo = maybe_read_exo(ctx);

  const auto [statics, report] = isdf::fit(model, data, exo, fit_config);
  if (!report.converged) {
    std::fprintf(stderr, "warning: best start did not meet the convergence tolerance\n");
  }

  write_json_file(ctx.out_dir / "xi_hat.json", xi_hat_to_json(statics, report, model));
  write_json_file(ctx.out_dir / "fit_report.json",
                  fit_report_to_json(report, fit_config.seed));

  ctx.echo["model"] = model_to_json(model);
  ctx.echo["fit"] = fit_to_json(fit_config);
  finish(ctx);
}

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

void cmd_filter(const CommonArgs& args) {
  RunContext ctx = prepare(args, "filter",
                           {"command", "seed", "threads", "io", "model", "statics", "filter"});
  if (ctx.data_path.empty()) {
    throw ConfigError("$.io.data: the filter command needs an observation CSV");
  }
  const DensityModel model = model_from(ctx);
  const StaticParams statics =
      build_statics(require_section(ctx.config, "statics"), model, "$.statics");
  const json* filter_section =
      ctx.config.contains("filter") ? &ctx.config.at("filter") : nullptr;
  const FilterOptions opts = build_filter_options(filter_section, "$.filter");

  const Matrix data = read_table(ctx.data_path);
  const Matrix exo = maybe_read_exo(ctx);

  const isdf::FilterPath path = isdf::run_filter(model, data, exo, statics, opts);
  if (path.diverged) {
    std::fprintf(stderr, "warning: filter diverged at t=%d; later rows are flagged\n",
                 path.first_divergence_index);
  }

  write_filter_path_csv(ctx.out_dir / "path.csv", path);

  ctx.echo["model"] = model_to_json(model);
  ctx.echo["statics"] = statics_to_json(statics, model);
  ctx.echo["filter"] = filter_options_to_json(opts);
  finish(ctx);
}

// ---------------------------------------------------------------------------
// replicate
// ---------------------------------------------------------------------------

void cmd_replicate(const CommonArgs& args) {
  RunContext ctx = prepare(
      args, "replicate",
      {"command", "seed", "threads", "io", "model", "statics", "dgp", "filter", "study"});
  const DensityModel dgp_model = model_from(ctx);

  std::optional<StaticParams> statics;
  if (ctx.config.contains("statics")) {
    statics = build_statics(ctx.config.at("statics"), dgp_model, "$.statics");
  }
  const DgpSpec dgp = build_dgp(require_section(ctx.config, "dgp"),
                                statics ? &*statics : nullptr, ctx.seed, "$.dgp");

  const json& study = require_section(ctx.config, "study");
  require_allowed_keys(study, "$.study", {"n_reps", "split", "true_values", "arms"});
  const int n_reps = get_int(study, "$.study", "n_reps");
  if (n_reps < 1) throw ConfigError("$.study.n_reps: must be at least 1");
  const int split = get_int_or(study, "$.study", "split", 0);
  if (split < 0) throw ConfigError("$.study.split: must be nonnegative");

  isdf::StudyOptions opts;
  opts.threads = ctx.threads;
  if (study.contains("true_values")) {
    const json& tv = study.at("true_values");
    if (!tv.is_object()) throw ConfigError("$.study.true_values: expected an object");
    for (const auto& item : tv.items()) {
      if (!item.value().is_number()) {
        throw ConfigError("$.study.true_values." + item.key() + ": expected a number");
      }
      opts.true_values[item.key()] = item.value().get<double>();
    }
  }
  const json* filter_section =
      ctx.config.contains("filter") ? &ctx.config.at("filter") : nullptr;
  opts.filter = build_filter_options(filter_section, "$.filter");

  if (!study.contains("arms")) throw ConfigError("$.study: missing required key 'arms'");
  const json& arms_json = study.at("arms");
  if (!arms_json.is_array() || arms_json.empty()) {
    throw ConfigError("$.study.arms: expected a nonempty array");
  }
  std::vector<isdf::StudyArm> arms;
  json arms_echo = json::array();
  for (std::size_t i = 0; i < arms_json.size(); ++i) {
    const std::string apath = "$.study.arms[" + std::to_string(i) + "]";
    const json& arm = arms_json[i];
    require_allowed_keys(arm, apath, {"label", "fit", "state_map", "model"});
    const std::string label = get_string(arm, apath, "label");
    const FitConfig fit = build_fit(require_section(arm, "fit"), ctx.seed, apath + ".fit");
    const DensityModel arm_model =
        arm.contains("model") ? build_model(arm.at("model"), apath + ".model") : dgp_model;
    const std::string map_id = get_string_or(arm, apath, "state_map", "identity");
    isdf::StudyArm::StateMap map = isdf::StudyArm::StateMap::identity;
    if (map_id == "log") {
      map = isdf::StudyArm::StateMap::log;
    } else if (map_id != "identity") {
      throw ConfigError(apath + ".state_map: unknown state map '" + map_id + "'");
    }
    arms.emplace_back(label, arm_model, fit, map);

    json arm_echo;
    arm_echo["label"] = label;
    arm_echo["state_map"] = map_id;
    arm_echo["model"] = model_to_json(arm_model);
    arm_echo["fit"] = fit_to_json(fit);
    arms_echo.push_back(arm_echo);
  }

  const isdf::ReplicationReport report =
      isdf::run_replication_study(dgp_model, dgp, arms, n_reps, split, opts);

  // report.csv: one row per replication, five columns per arm.
  std::vector<std::string> headers = {"rep", "seed"};
  for (const auto& label : report.arm_labels) {
    headers.push_back(label + "_in_mse");
    headers.push_back(label + "_out_mse");
    headers.push_back(label + "_diverged");
    headers.push_back(label + "_fit_failed");
    headers.push_back(label + "_loglik");
  }
  Matrix table(static_cast<Eigen::Index>(report.rows.size()),
               static_cast<Eigen::Index>(headers.size()));
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    const auto& row = report.rows[r];
    Eigen::Index c = 0;
    const auto ri = static_cast<Eigen::Index>(r);
    table(ri, c++) = static_cast<double>(row.rep);
    table(ri, c++) = static_cast<double>(row.seed);
    for (const auto& arm : row.arms) {
      table(ri, c++) = arm.in_mse;
      table(ri, c++) = arm.out_mse;
      table(ri, c++) = arm.diverged ? 1.0 : 0.0;
      table(ri, c++) = arm.fit_failed ? 1.0 : 0.0;
      table(ri, c++) = arm.total_loglik;
    }
  }
  isdf::write_csv((ctx.out_dir / "report.csv").string(), headers, table);

  json aggregate;
  aggregate["split"] = report.split_R;
  aggregate["master_seed"] = report.master_seed;
  aggregate["n_reps"] = static_cast<int>(report.rows.size());
  if (!report.true_values.empty()) {
    aggregate["true_values"] = named_map_to_json(report.true_values);
  }
  json arms_out = json::array();
  int fit_failures = 0;
  for (const auto& agg : report.aggregates) {
    json a;
    a["label"] = agg.label;
    a["n_rows"] = agg.n_rows;
    a["n_fit_failures"] = agg.n_fit_failures;
    a["mean_in_mse"] = json_number(agg.mean_in_mse);
    a["mean_out_mse"] = json_number(agg.mean_out_mse);
    a["mean_in_mse_finite"] = json_number(agg.mean_in_mse_finite);
    a["mean_out_mse_finite"] = json_number(agg.mean_out_mse_finite);
    a["median_in_mse"] = json_number(agg.median_in_mse);
    a["median_out_mse"] = json_number(agg.median_out_mse);
    a["divergence_fraction_in"] = agg.divergence_fraction_in;
    a["divergence_fraction_out"] = agg.divergence_fraction_out;
    if (!agg.rmse.empty()) a["rmse"] = named_map_to_json(agg.rmse);
    arms_out.push_back(a);
    fit_failures += agg.n_fit_failures;
  }
  aggregate["arms"] = arms_out;
  write_json_file(ctx.out_dir / "aggregate.json", aggregate);
  if (fit_failures > 0) {
    std::fprintf(stderr, "warning: %d replication fit(s) failed; rows are flagged\n",
                 fit_failures);
  }

  ctx.echo["model"] = model_to_json(dgp_model);
  if (statics) ctx.echo["statics"] = statics_to_json(*statics, dgp_model);
  ctx.echo["dgp"] = dgp_to_json(dgp);
  if (filter_section != nullptr) ctx.echo["filter"] = filter_options_to_json(opts.filter);
  json study_echo;
  study_echo["n_reps"] = n_reps;
  study_echo["split"] = split;
  if (!opts.true_values.empty()) study_echo["true_values"] = named_map_to_json(opts.true_values);
  study_echo["arms"] = arms_echo;
  ctx.echo["study"] = study_echo;
  finish(ctx);
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

void cmd_diagnose(const CommonArgs& args) {
  RunContext ctx =
      prepare(args, "diagnose", {"command", "seed", "threads", "io", "diagnose"});
  const json& section = require_section(ctx.config, "diagnose");
  require_allowed_keys(section, "$.diagnose",
                       {"contraction", "ndr", "invertibility", "t_location_bound",
                        "cauchy_moments", "mse_curve", "mse_decomposition"});

  auto entries_of = [&](const char* key) -> const json& {
    const json& entries = section.at(key);
    if (!entries.is_array()) {
      throw ConfigError(std::string("$.diagnose.") + key + ": expected an array");
    }
    return entries;
  };

  json results;
  if (section.contains("contraction")) {
    results["contraction"] =
        diagnose_contraction(entries_of("contraction"), "$.diagnose.contraction");
  }
  if (section.contains("ndr")) {
    results["ndr"] = diagnose_ndr(entries_of("ndr"), "$.diagnose.ndr");
  }
  if (section.contains("invertibility")) {
    results["invertibility"] =
        diagnose_invertibility(entries_of("invertibility"), "$.diagnose.invertibility");
  }
  if (section.contains("t_location_bound")) {
    results["t_location_bound"] =
        diagnose_t_location_bound(entries_of("t_location_bound"), "$.diagnose.t_location_bound");
  }
  if (section.contains("cauchy_moments")) {
    results["cauchy_moments"] =
        diagnose_cauchy_moments(entries_of("cauchy_moments"), "$.diagnose.cauchy_moments");
  }
  if (section.contains("mse_curve")) {
    results["mse_curve"] = diagnose_mse_curve(entries_of("mse_curve"), "$.diagnose.mse_curve");
  }
  if (section.contains("mse_decomposition")) {
    results["mse_decomposition"] = diagnose_mse_decomposition(
        entries_of("mse_decomposition"), "$.diagnose.mse_decomposition", ctx.seed);
  }

  write_json_file(ctx.out_dir / "diagnostics.json", results);

  ctx.echo["diagnose"] = section;
  finish(ctx);
}

}  // namespace isdfcli
