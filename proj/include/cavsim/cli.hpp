#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace cavsim {

struct CliOptions {
  std::string command;  ///< scan, g2, rabi, echo, interrogate, derive-cavity
  std::string config_path;
  std::string out_dir;  ///< overrides the config's output directory
  std::optional<std::uint64_t> seed;
  double shots_scale = 1.0;  ///< scales every Monte-Carlo repetition count
  bool strip_origin = false;
  std::optional<double> bandwidth_hz;  ///< g2 pulse bandwidth override
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitFit = 4 };

/// Runs one subcommand, writing outputs under the output directory and
/// human-readable progress to `out`. Errors are reported on `err` as a
/// one-line JSON object and mapped to the exit code.
int run_command(const CliOptions& options, std::ostream& out, std::ostream& err);

}  // namespace cavsim
