#pragma once

/**
 * Strict config-file layer of the command-line tool.
 *
 * A run is declared by a single JSON config file with sections mirroring the
 * library's option structs (model / statics / dgp / fit / filter / study /
 * diagnose plus io paths, seed, and parallelism).  Parsing is strict: any
 * unknown key fails with a diagnostic naming the full key path, and malformed
 * JSON fails with a line number.  Every builder has a serializer producing a
 * fully-resolved section (defaults materialized) that parses back to the
 * same configuration; the tool echoes that resolved form next to every run's
 * outputs.
 */

#include "isdf/densities.hpp"
#include "isdf/estimate.hpp"
#include "isdf/filter.hpp"
#include "isdf/simulate.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace isdfcli {

using json = nlohmann::ordered_json;

/// Parse a JSON config file.  Throws isdf::IoError when the file cannot be
/// read and isdf::ConfigError with a 1-based line number when it is not
/// valid JSON.
json load_config_file(const std::string& path);

/// Reject keys of `obj` outside `allowed`; `path` names the object in
/// diagnostics (e.g. "$.dgp").
void require_allowed_keys(const json& obj, const std::string& path,
                          std::initializer_list<const char*> allowed);

// Typed field access with path-tagged ConfigError diagnostics.  The *_or
// forms return the fallback when the key is absent.
double get_number(const json& obj, const std::string& path, const char* key);
double get_number_or(const json& obj, const std::string& path, const char* key, double fallback);
int get_int(const json& obj, const std::string& path, const char* key);
int get_int_or(const json& obj, const std::string& path, const char* key, int fallback);
bool get_bool_or(const json& obj, const std::string& path, const char* key, bool fallback);
std::string get_string(const json& obj, const std::string& path, const char* key);
std::string get_string_or(const json& obj, const std::string& path, const char* key,
                          const std::string& fallback);
std::uint64_t get_seed_or(const json& obj, const std::string& path, const char* key,
                          std::uint64_t fallback);

/// A number parses as a length-1 vector; an array of numbers as-is.
isdf::Vector as_vector(const json& value, const std::string& path);
/// A number parses as 1×1; an array of equal-length numeric rows as-is.
isdf::Matrix as_matrix(const json& value, const std::string& path);
/// A number broadcasts to a constant length-k vector; arrays must have k entries.
isdf::Vector as_vector_of_dim(const json& value, int k, const std::string& path);
/// A number becomes v·I_k, a length-k array a diagonal, rows a full k×k matrix.
isdf::Matrix as_square_matrix(const json& value, int k, const std::string& path);

json vector_to_json(const isdf::Vector& v);
json matrix_to_json(const isdf::Matrix& m);
/// Finite values stay numeric; ±inf and nan become the strings "inf",
/// "-inf", "nan" (JSON has no non-finite literals).
json json_number(double v);

// ---------------------------------------------------------------------------
// Section builders and their resolved-form serializers.
// ---------------------------------------------------------------------------

isdf::DensityModel build_model(const json& obj, const std::string& path);
json model_to_json(const isdf::DensityModel& model);

/// Needs the model for dimensions, default shape, and the learning-rate
/// scaling convention behind the "scalar_h" penalty form.
isdf::StaticParams build_statics(const json& obj, const isdf::DensityModel& model,
                                 const std::string& path);
json statics_to_json(const isdf::StaticParams& statics, const isdf::DensityModel& model);

/// `statics` supplies the filter-as-DGP parameters (required for that kind).
isdf::DgpSpec build_dgp(const json& obj, const isdf::StaticParams* statics,
                        std::uint64_t default_seed, const std::string& path);
json dgp_to_json(const isdf::DgpSpec& dgp);

isdf::FitConfig build_fit(const json& obj, std::uint64_t default_seed,
                          const std::string& path);
json fit_to_json(const isdf::FitConfig& fit);

/// `obj == nullptr` yields defaults (implicit mode, keep-going on divergence).
isdf::FilterOptions build_filter_options(const json* obj, const std::string& path);
json filter_options_to_json(const isdf::FilterOptions& opts);

}  // namespace isdfcli
