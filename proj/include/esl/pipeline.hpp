#pragma once

#include "esl/config.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace esl {

inline constexpr std::string_view kToolName = "exotic-spin-lab";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunOptions {
  std::filesystem::path out_dir;  // empty: use the config's output dir
  bool deterministic = false;     // omit wall-clock timestamps
  bool check = false;             // reproduce-paper: evaluate acceptance checks
  std::optional<std::uint64_t> seed;
};

const std::vector<std::string>& subcommand_names();

/// Runs one subcommand, writing CSV/JSON artifacts and updating
/// manifest.json in the output directory. Returns the exit status
/// (kExitOk, or kExitCheckFailed when a --check fails); library errors
/// propagate as esl::Error.
int run_subcommand(const std::string& name, RunConfig cfg, const RunOptions& options);

}  // namespace esl
