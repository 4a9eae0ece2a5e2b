#pragma once

/// The five command-line entry points.  Each loads a strict JSON run
/// configuration, materializes the module option structs, runs the requested
/// operation, and writes its outputs (plus a fully-resolved echo of the
/// configuration) into the output directory.  Errors propagate as the
/// library's exception types; the caller maps them to exit codes.

#include <string>

namespace isdfcli {

struct CommonArgs {
  std::string config_path;  ///< -c/--config: run configuration (JSON)
  std::string out_dir;      ///< -o/--out: overrides io.out when nonempty
};

void cmd_simulate(const CommonArgs& args);
void cmd_fit(const CommonArgs& args);
void cmd_filter(const CommonArgs& args);
void cmd_replicate(const CommonArgs& args);
void cmd_diagnose(const CommonArgs& args);

}  // namespace isdfcli
