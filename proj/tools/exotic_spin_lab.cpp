// exotic-spin-lab <subcommand> --config <path> [--out <dir>] [--deterministic] [--seed N]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 reproduce-paper --check failed. Errors are reported as one JSON object
// on stderr. ESL_LOG_LEVEL (trace, debug, info, warn, error, off) sets the
// log verbosity; default warn.

#include "esl/config.hpp"
#include "esl/errors.hpp"
#include "esl/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

int report_error(std::string_view kind, const std::string& message, int code) {
  nlohmann::json j = {{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << '\n';
  return code;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("esl");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("ESL_LOG_LEVEL"))
    spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Exotic spin-dependent interaction simulation and analysis", "exotic-spin-lab"};
  app.set_version_flag("--version", std::string(esl::kToolVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  bool deterministic = false;
  bool check = false;
  std::uint64_t seed = 0;

  for (const auto& name : esl::subcommand_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    sub->add_flag("--deterministic", deterministic, "omit timestamps for byte-identical reruns");
    sub->add_option("--seed", seed, "override [analysis] seed");
    if (name == "reproduce-paper")
      sub->add_flag("--check", check, "evaluate reference checks; exit 4 on failure");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), esl::kExitConfig);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  esl::RunOptions options;
  options.out_dir = out_dir;
  options.deterministic = deterministic;
  options.check = check;
  if (app.get_subcommands().front()->count("--seed")) options.seed = seed;

  try {
    const esl::RunConfig cfg = esl::parse_config(config_path);
    return esl::run_subcommand(name, cfg, options);
  } catch (const esl::Error& e) {
    return report_error(esl::to_string(e.kind()), e.what(), esl::exit_code_for(e.kind()));
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), esl::kExitNumerical);
  }
}
