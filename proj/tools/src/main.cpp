#include "commands.hpp"

#include "isdf/common.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <exception>
#include <string>

namespace {

// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 file I/O error, 4 estimation failed on every start.
constexpr int kExitUnexpected = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitAllStartsFailed = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-driven filtering of time-varying parameters: simulate, fit, "
               "filter, replicate, diagnose"};
  app.require_subcommand(1);

  isdfcli::CommonArgs args;
  auto add_command = [&](const char* name, const char* description) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("-c,--config", args.config_path, "run configuration (JSON)")
        ->required();
    sub->add_option("-o,--out", args.out_dir, "output directory (overrides io.out)");
    return sub;
  };

  CLI::App* sim = add_command("simulate", "generate a series under a configured DGP");
  CLI::App* fit = add_command("fit", "estimate static parameters by maximum likelihood");
  CLI::App* filter = add_command("filter", "run one filter pass over a series");
  CLI::App* replicate = add_command("replicate", "Monte-Carlo replication study");
  CLI::App* diagnose = add_command("diagnose", "contraction and MSE diagnostics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (sim->parsed()) {
      isdfcli::cmd_simulate(args);
    } else if (fit->parsed()) {
      isdfcli::cmd_fit(args);
    } else if (filter->parsed()) {
      isdfcli::cmd_filter(args);
    } else if (replicate->parsed()) {
      isdfcli::cmd_replicate(args);
    } else if (diagnose->parsed()) {
      isdfcli::cmd_diagnose(args);
    }
    return 0;
  } catch (const isdf::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const isdf::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const isdf::AllStartsFailed& e) {
    std::fprintf(stderr, "estimation failed: %s\n", e.what());
    return kExitAllStartsFailed;
  } catch (const isdf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return kExitUnexpected;
  }
}
