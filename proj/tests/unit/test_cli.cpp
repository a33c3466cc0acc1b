#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cavsim/cli.hpp"

using namespace cavsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cavsim_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_file(const fs::path& p, const std::string& body) {
  std::ofstream(p) << body;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd, const std::string& config, const fs::path& out, std::string* err_text = nullptr,
        std::uint64_t seed = 1) {
  CliOptions o;
  o.command = cmd;
  o.config_path = config;
  o.out_dir = out.string();
  o.seed = seed;
  std::ostringstream so, se;
  const int rc = run_command(o, so, se);
  if (err_text) *err_text = se.str();
  return rc;
}

constexpr const char* kSmallRabi = "[rabi]\nshots = 20\npoints = 21\n";

}  // namespace

TEST_CASE("derive-cavity prints the device") {
  CliOptions o;
  o.command = "derive-cavity";
  std::ostringstream so, se;
  CHECK(run_command(o, so, se) == kExitOk);
  CHECK(so.str().find("finesse") != std::string::npos);
}

TEST_CASE("rabi run writes outputs and a manifest") {
  const fs::path d = scratch("rabi");
  const auto cfg = write_file(d / "run.toml", kSmallRabi);
  REQUIRE(run("rabi", cfg, d / "out") == kExitOk);
  for (const char* f : {"rabi.csv", "rabi_fit.json", "plot_rabi.json", "config.toml", "manifest.json"})
    CHECK(fs::exists(d / "out" / f));
  const auto m = nlohmann::json::parse(slurp(d / "out" / "manifest.json"));
  CHECK(m.at("command") == "rabi");
  CHECK(m.at("seed") == 1);
  CHECK(m.at("noise_preset") == "b6_8");
  CHECK(m.contains("config_hash"));
}

TEST_CASE("same seed gives byte-identical outputs") {
  const fs::path d = scratch("determinism");
  const auto cfg = write_file(d / "run.toml", kSmallRabi);
  REQUIRE(run("rabi", cfg, d / "a", nullptr, 7) == kExitOk);
  REQUIRE(run("rabi", cfg, d / "b", nullptr, 7) == kExitOk);
  REQUIRE(run("rabi", cfg, d / "c", nullptr, 8) == kExitOk);
  for (const auto& f : fs::directory_iterator(d / "a")) {
    const auto name = f.path().filename();
    CHECK(slurp(f.path()) == slurp(d / "b" / name));
  }
  CHECK(slurp(d / "a" / "rabi.csv") != slurp(d / "c" / "rabi.csv"));
}

TEST_CASE("configuration errors exit with code 2") {
  const fs::path d = scratch("config_error");
  std::string err;
  CHECK(run("rabi", write_file(d / "bad.toml", "[rabi]\nshotz = 3\n"), d / "out", &err) == kExitConfig);
  const auto j = nlohmann::json::parse(err);
  CHECK(j.at("error") == "config");
  CHECK(j.at("message").get<std::string>().find("shotz") != std::string::npos);
  CHECK(run("rabi", (d / "missing.toml").string(), d / "out") == kExitConfig);
  CHECK(run("fly", "", d / "out") == kExitConfig);
}

TEST_CASE("runtime failures exit with code 3") {
  const fs::path d = scratch("runtime");
  std::string err;
  CHECK(run("g2", write_file(d / "g2.toml", "[g2]\npulses = 500\n"), d / "out", &err) == kExitRuntime);
  CHECK(nlohmann::json::parse(err).at("error") == "runtime");
}

TEST_CASE("unidentifiable fits exit with code 4") {
  const fs::path d = scratch("fit");
  std::string err;
  const auto cfg = write_file(d / "echo.toml", "[echo]\ndecay = false\ndetection_efficiency = 0\nshots = 1\n");
  CHECK(run("echo", cfg, d / "out", &err) == kExitFit);
  CHECK(nlohmann::json::parse(err).at("error") == "fit");
}
