#include "cavsim/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <vector>

#include "cavsim/config.hpp"
#include "cavsim/error.hpp"

namespace cavsim {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::size_t scaled(std::size_t n, double scale, std::size_t floor_value = 1) {
  return std::max<std::size_t>(floor_value, static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)));
}

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  std::ofstream open(const std::string& name) {
    files_.push_back(name);
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    return f;
  }

  void text(const std::string& name, const std::string& body) { open(name) << body; }
  void json(const std::string& name, const ordered_json& j) { open(name) << j.dump(2) << "\n"; }

  const std::vector<std::string>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

ordered_json fit_json(const FitResult& f) { return ordered_json::parse(f.to_json()); }

ordered_json cavity_json(const CavityDerived& d) {
  return {{"finesse", d.finesse},
          {"linewidth_hz", d.fwhm_linewidth_hz},
          {"fsr_hz", d.fsr_hz},
          {"quality_factor", d.quality_factor},
          {"waist_m", d.waist_m},
          {"mode_volume_m3", d.mode_volume_m3},
          {"p_tl", d.p_tl},
          {"p_tl_model", d.p_tl_model},
          {"p_branched", d.p_branched},
          {"eta_out", d.eta_out},
          {"eta_back", d.eta_back},
          {"eta_loss", d.eta_loss}};
}

void print_cavity(std::ostream& os, const RunConfig& cfg) {
  const Setup s = cfg.setup();
  const CavityDerived& d = s.cavity;
  Emitter e = make_emitter_with_purcell(0, 0.0, d.p_branched, s.emitter_model);
  const EfficiencyChain chain = s.chain_for(e);
  char buf[128];
  auto row = [&](const char* name, double v, const char* unit) {
    std::snprintf(buf, sizeof buf, "%-22s %14.6g %s\n", name, v, unit);
    os << buf;
  };
  row("finesse", d.finesse, "");
  row("linewidth (kappa)", d.fwhm_linewidth_hz * 1e-6, "MHz");
  row("free spectral range", d.fsr_hz * 1e-9, "GHz");
  row("quality factor", d.quality_factor, "");
  row("mode waist", d.waist_m * 1e6, "um");
  row("mode volume", d.mode_volume_m3 * 1e18, "um^3");
  row("P_TL (model)", d.p_tl_model, "");
  row("P_TL", d.p_tl, "");
  row("P (branched)", d.p_branched, "");
  row("lifetime at P", e.lifetime_s * 1e3, "ms");
  row("eta_channel", chain.eta_channel, "");
  row("eta_out", d.eta_out, "");
  row("eta_back", d.eta_back, "");
  row("eta_loss", d.eta_loss, "");
  row("eta_fiber", chain.eta_fiber, "");
  row("eta_rest", chain.eta_rest, "");
  row("eta_total", chain.total(), "");
}

ordered_json spectrum_plot(const std::vector<SpectrumPoint>& pts) {
  ordered_json x = ordered_json::array(), y = ordered_json::array(), e = ordered_json::array();
  for (const auto& p : pts) {
    x.push_back(p.detuning_hz);
    y.push_back(p.signal);
    e.push_back(p.error);
  }
  return {{"x_hz", x}, {"y", y}, {"error", e}};
}

ordered_json scan_plot(const std::vector<ScanPoint>& pts) {
  ordered_json x = ordered_json::array(), y = ordered_json::array(), e = ordered_json::array();
  for (const auto& p : pts) {
    x.push_back(p.x);
    y.push_back(p.mean);
    e.push_back(p.std_err);
  }
  return {{"x", x}, {"y", y}, {"error", e}};
}

void cmd_scan(const RunConfig& cfg, const CliOptions& opt, Output& out, ordered_json& summary, std::ostream& log) {
  const Setup setup = cfg.setup();
  const auto ensemble = sample_ensemble(cfg.line, cfg.window, cfg.cavity.geometry, setup.emitter_model, cfg.seed);
  ScanPlan plan = cfg.scan_plan();
  plan.shots = scaled(plan.shots, opt.shots_scale);
  const auto spectrum = run_spectral_scan(ensemble, plan, setup, cfg.seed);
  out.text("ensemble.json", ensemble_to_json(ensemble) + "\n");
  {
    auto f = out.open("spectrum.csv");
    write_spectrum_csv(f, spectrum);
  }
  // Peaks are counted against a local baseline, the background follows the
  // inhomogeneous line across the scan.
  std::vector<double> y;
  for (const auto& p : spectrum) y.push_back(p.signal);
  const auto baseline = running_median(y, 100);
  const double n = static_cast<double>(plan.shots);
  std::vector<double> z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) z[i] = (y[i] - baseline[i]) / std::sqrt(std::max(baseline[i], 1.0 / n) / n);
  constexpr double kSigmas = 5.0;
  const auto peaks = find_peaks(z, kSigmas, 5);
  ordered_json pk = ordered_json::array();
  for (auto i : peaks) pk.push_back(spectrum[i].detuning_hz);
  summary["emitters"] = ensemble.size();
  summary["peaks"] = peaks.size();
  summary["peak_threshold_sigma"] = kSigmas;
  out.json("plot_spectrum.json", {{"figure", "broadband fluorescence spectrum"},
                                  {"spectrum", spectrum_plot(spectrum)},
                                  {"peaks_hz", pk}});
  log << "scan: " << ensemble.size() << " emitters, " << peaks.size() << " peaks\n";
}

void cmd_g2(const RunConfig& cfg, const CliOptions& opt, Output& out, ordered_json& summary, std::ostream& log) {
  const Setup setup = cfg.setup();
  G2Plan plan = cfg.g2;
  if (opt.bandwidth_hz) plan.bandwidth_hz = *opt.bandwidth_hz;
  plan.pulses = scaled(plan.pulses, opt.shots_scale, static_cast<std::size_t>(plan.max_lag) + 1);
  plan.keep_stream = true;
  plan.fit_bunching = false;
  const Emitter e = cfg.target_emitter();
  G2Run run = run_g2_experiment(e, plan, setup, cfg.seed);
  {
    auto f = out.open("clicks.csv");
    write_clicks_csv(f, run.stream, !opt.strip_origin);
  }
  {
    auto f = out.open("g2.csv");
    write_g2_csv(f, run.histogram);
  }
  summary["bandwidth_hz"] = plan.bandwidth_hz;
  summary["pulses"] = plan.pulses;
  summary["clicks"] = run.clicks;
  summary["raw_g2_zero"] = run.raw_g2_zero;
  summary["dark_fraction"] = run.dark_fraction;
  summary["rescaled_g2_zero"] = run.rescaled_g2_zero;
  ordered_json lags = ordered_json::array(), vals = ordered_json::array(), errs = ordered_json::array();
  for (std::size_t i = 0; i < run.histogram.lags.size(); ++i) {
    lags.push_back(run.histogram.lags[i]);
    vals.push_back(run.histogram.values[i]);
    errs.push_back(run.histogram.errors[i]);
  }
  out.json("plot_g2.json", {{"figure", "pulsed autocorrelation"},
                            {"period_s", run.histogram.period_s},
                            {"lag", lags},
                            {"g2", vals},
                            {"error", errs},
                            {"raw_g2_zero", run.raw_g2_zero},
                            {"rescaled_g2_zero", run.rescaled_g2_zero}});
  log << "g2: raw g2(0) = " << run.raw_g2_zero << ", rescaled = " << run.rescaled_g2_zero << "\n";
  if (cfg.g2.fit_bunching) {
    const FitResult fit = fit_bunching(run.histogram);
    out.json("g2_fit.json", fit_json(fit));
    summary["bunching_tau_d_s"] = fit.value("tau_d");
  }
}

void cmd_rabi(const RunConfig& cfg, const CliOptions& opt, Output& out, ordered_json& summary, std::ostream& log) {
  RabiPlan plan = cfg.rabi_plan();
  plan.settings.shots = scaled(plan.settings.shots, opt.shots_scale);
  const RabiRun run = run_rabi(cfg.target_emitter(), plan, cfg.seed);
  {
    auto f = out.open("rabi.csv");
    write_scan_csv(f, run.points, "photons");
  }
  out.json("plot_rabi.json", {{"figure", "Rabi oscillation"}, {"data", scan_plot(run.points)}});
  out.json("rabi_fit.json", fit_json(*run.fit));
  summary["n_pi"] = run.fit->value("n_pi");
  log << "rabi: N_pi = " << run.fit->value("n_pi") << "\n";
}

void cmd_echo(const RunConfig& cfg, const CliOptions& opt, Output& out, ordered_json& summary, std::ostream& log) {
  EchoPlan plan = cfg.echo_plan();
  plan.settings.shots = scaled(plan.settings.shots, opt.shots_scale);
  const EchoRun run = run_echo(cfg.target_emitter(), plan, cfg.seed);
  {
    auto f = out.open("echo.csv");
    write_scan_csv(f, run.points, "t_seq_s");
  }
  out.json("plot_echo.json", {{"figure", "Hahn echo decay"}, {"data", scan_plot(run.points)}});
  out.json("echo_fit.json", fit_json(run.fit));
  summary["t2_s"] = run.fit.value("tau");
  log << "echo: T2 = " << run.fit.value("tau") * 1e3 << " ms\n";
}

void cmd_interrogate(const RunConfig& cfg, const CliOptions& opt, Output& out, ordered_json& summary,
                     std::ostream& log) {
  InterrogationPlan plan = cfg.interrogate;
  plan.shots_per_point = scaled(plan.shots_per_point, opt.shots_scale);
  const auto emitters = cfg.interrogation_emitters();
  const auto res = run_interrogation(emitters, plan, cfg.setup(), cfg.seed);
  {
    auto f = out.open("intervals.csv");
    write_intervals_csv(f, res.records);
  }
  {
    auto f = out.open("aggregate.csv");
    write_aggregate_csv(f, res.aggregates);
  }
  ordered_json fits = ordered_json::array();
  ordered_json plot_lines = ordered_json::array();
  for (const auto& a : res.aggregates) {
    ordered_json j{{"target", a.target}};
    j["raw"] = a.raw_fit ? fit_json(*a.raw_fit) : ordered_json();
    j["corrected"] = a.corrected_fit ? fit_json(*a.corrected_fit) : ordered_json();
    const auto c = res.centers(a.target);
    double m = 0, v = 0;
    for (double x : c) m += x;
    if (!c.empty()) m /= static_cast<double>(c.size());
    for (double x : c) v += (x - m) * (x - m);
    j["center_scatter_hz"] = c.size() > 1 ? std::sqrt(v / static_cast<double>(c.size() - 1)) : 0.0;
    fits.push_back(j);
    plot_lines.push_back({{"target", a.target}, {"raw", spectrum_plot(a.raw)}, {"corrected", spectrum_plot(a.corrected)}});
  }
  out.json("aggregate_fits.json", fits);
  ordered_json centers = ordered_json::array();
  for (const auto& r : res.records)
    if (r.fit_ok) centers.push_back({{"interval", r.interval}, {"target", r.target}, {"center_hz", r.center_hz},
                                     {"error_hz", r.center_error_hz}});
  out.json("plot_interrogation.json",
           {{"figure", "long-term spectral stability"}, {"centers", centers}, {"aggregates", plot_lines}});
  summary["intervals"] = res.records.size();
  summary["cavity_retunes"] = res.cavity_retunes;
  summary["aggregates"] = fits;
  log << "interrogate: " << res.records.size() << " interval fits\n";
}

int dispatch(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  std::vector<std::string> warnings;
  RunConfig cfg = opt.config_path.empty() ? default_config() : load_config(opt.config_path, &warnings);
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.seed_given = true;
    warnings.clear();
  }
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  if (!(opt.shots_scale > 0)) throw ConfigError("--shots-scale must be > 0");

  if (opt.command == "derive-cavity") {
    print_cavity(out, cfg);
    if (opt.out_dir.empty()) return kExitOk;
    Output output{fs::path(opt.out_dir)};
    output.json("cavity.json", cavity_json(cfg.setup().cavity));
    return kExitOk;
  }

  Output output(opt.out_dir.empty() ? fs::path(cfg.out_dir) : fs::path(opt.out_dir));
  const std::string resolved = write_config(cfg);
  output.text("config.toml", resolved);
  ordered_json summary = ordered_json::object();
  if (opt.command == "scan")
    cmd_scan(cfg, opt, output, summary, out);
  else if (opt.command == "g2")
    cmd_g2(cfg, opt, output, summary, out);
  else if (opt.command == "rabi")
    cmd_rabi(cfg, opt, output, summary, out);
  else if (opt.command == "echo")
    cmd_echo(cfg, opt, output, summary, out);
  else if (opt.command == "interrogate")
    cmd_interrogate(cfg, opt, output, summary, out);
  else
    throw ConfigError("unknown subcommand '" + opt.command + "'");

  ordered_json manifest{{"tool", "simtool"},
                        {"version", "1.0.0"},
                        {"command", opt.command},
                        {"seed", cfg.seed},
                        {"shots_scale", opt.shots_scale},
                        {"noise_preset", cfg.selected_preset().name},
                        {"config_hash", content_hash(resolved)},
                        {"cavity", cavity_json(cfg.setup().cavity)},
                        {"files", output.files()},
                        {"summary", summary}};
  output.json("manifest.json", manifest);
  return kExitOk;
}

void report(std::ostream& err, const char* kind, const std::exception& e) {
  err << ordered_json{{"error", kind}, {"message", e.what()}}.dump() << "\n";
}

}  // namespace

int run_command(const CliOptions& options, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(options, out, err);
  } catch (const ConfigError& e) {
    report(err, "config", e);
    return kExitConfig;
  } catch (const FitError& e) {
    report(err, "fit", e);
    return kExitFit;
  } catch (const std::exception& e) {
    report(err, "runtime", e);
    return kExitRuntime;
  }
}

}  // namespace cavsim
