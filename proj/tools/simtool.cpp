#include <CLI11.hpp>
#include <iostream>

#include "cavsim/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cavity-enhanced erbium emitter simulator"};
  app.require_subcommand(1);
  cavsim::CliOptions opt;
  std::uint64_t seed = 0;
  double bandwidth = 0;

  for (const char* name : {"scan", "g2", "rabi", "echo", "interrogate", "derive-cavity"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "Config file (TOML-style)");
    sub->add_option("--seed", seed, "RNG seed, overrides the config");
    sub->add_option("--out", opt.out_dir, "Output directory, overrides the config");
    sub->add_option("--shots-scale", opt.shots_scale, "Scale all Monte-Carlo repetition counts");
    sub->add_flag("--strip-origin", opt.strip_origin, "Omit click origin tags from clicks.csv");
    if (std::string(name) == "g2") sub->add_option("--bandwidth", bandwidth, "Pulse bandwidth in Hz");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cavsim::kExitConfig;
  }

  auto* sub = app.get_subcommands().front();
  opt.command = sub->get_name();
  if (sub->count("--seed")) opt.seed = seed;
  if (opt.command == "g2" && sub->count("--bandwidth")) opt.bandwidth_hz = bandwidth;
  return cavsim::run_command(opt, std::cout, std::cerr);
}
