#include "cavsim/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "cavsim/error.hpp"

namespace cavsim {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed parsing assumes a 64-bit size_t");

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size();
}

ConfigValue parse_value(const std::string& raw, const std::string& where) {
  ConfigValue v;
  const std::string s = trim(raw);
  if (s.empty()) throw ConfigError(where + ": missing value");
  if (s == "true" || s == "false") {
    v.kind = ConfigValue::Kind::kBool;
    v.boolean = s == "true";
  } else if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw ConfigError(where + ": unterminated string");
    v.kind = ConfigValue::Kind::kString;
    v.text = s.substr(1, s.size() - 2);
  } else if (s.front() == '[') {
    if (s.back() != ']') throw ConfigError(where + ": unterminated array");
    v.kind = ConfigValue::Kind::kArray;
    std::stringstream ss(s.substr(1, s.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      double d;
      if (!parse_number(item, d)) throw ConfigError(where + ": array element '" + item + "' is not a number");
      v.array.push_back(d);
    }
  } else {
    v.kind = ConfigValue::Kind::kNumber;
    v.text = s;
    if (!parse_number(s, v.number)) throw ConfigError(where + ": '" + s + "' is not a number, boolean, string or array");
  }
  return v;
}

// Shortest text that parses back to the same double.
std::string fmt(double d) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, res.ptr);
}

// Reads or writes every field through one visitor so the two stay in sync.
class Reader {
 public:
  explicit Reader(ConfigDocument doc) : doc_(std::move(doc)) {}

  void section(const std::string& name) {
    name_ = name;
    touched_.insert(name);
  }

  template <class T>
  void field(const std::string& key, T& out) {
    auto sec = doc_.sections.find(name_);
    if (sec == doc_.sections.end()) return;
    auto it = sec->second.find(key);
    if (it == sec->second.end()) return;
    assign(it->second, out, where(key));
    sec->second.erase(it);
  }

  bool has(const std::string& key) const {
    auto sec = doc_.sections.find(name_);
    return sec != doc_.sections.end() && sec->second.count(key) > 0;
  }

  void finish() {
    for (const auto& [name, keys] : doc_.sections) {
      if (!touched_.count(name)) throw ConfigError("unknown section [" + name + "]");
      if (!keys.empty())
        throw ConfigError("unknown key '" + keys.begin()->first + "' in " + (name.empty() ? "top level" : "[" + name + "]"));
    }
  }

  const ConfigDocument& doc() const { return doc_; }

 private:
  std::string where(const std::string& key) const { return (name_.empty() ? "" : name_ + ".") + key; }

  static const ConfigValue& expect(const ConfigValue& v, ConfigValue::Kind k, const std::string& w, const char* type) {
    if (v.kind != k) throw ConfigError(w + ": expected " + type);
    return v;
  }
  static void assign(const ConfigValue& v, double& out, const std::string& w) {
    out = expect(v, ConfigValue::Kind::kNumber, w, "a number").number;
  }
  static void assign(const ConfigValue& v, bool& out, const std::string& w) {
    out = expect(v, ConfigValue::Kind::kBool, w, "a boolean").boolean;
  }
  static void assign(const ConfigValue& v, std::string& out, const std::string& w) {
    out = expect(v, ConfigValue::Kind::kString, w, "a string").text;
  }
  static void assign(const ConfigValue& v, std::vector<double>& out, const std::string& w) {
    out = expect(v, ConfigValue::Kind::kArray, w, "an array of numbers").array;
  }
  static void assign(const ConfigValue& v, int& out, const std::string& w) {
    const double d = expect(v, ConfigValue::Kind::kNumber, w, "an integer").number;
    if (d != std::floor(d) || std::abs(d) > 2e9) throw ConfigError(w + ": expected an integer");
    out = static_cast<int>(d);
  }
  static void assign(const ConfigValue& v, std::size_t& out, const std::string& w) {
    const auto& t = expect(v, ConfigValue::Kind::kNumber, w, "a non-negative integer").text;
    errno = 0;
    char* end = nullptr;
    if (t.empty() || t[0] == '-') throw ConfigError(w + ": expected a non-negative integer");
    const unsigned long long x = std::strtoull(t.c_str(), &end, 10);
    if (errno != 0 || end != t.c_str() + t.size()) throw ConfigError(w + ": expected a non-negative integer");
    out = static_cast<std::size_t>(x);
  }

  ConfigDocument doc_;
  std::string name_;
  std::set<std::string> touched_;
};

class Writer {
 public:
  void section(const std::string& name) {
    if (!name.empty()) out_ << "\n[" << name << "]\n";
  }
  void field(const std::string& key, const double& v) { out_ << key << " = " << fmt(v) << "\n"; }
  void field(const std::string& key, const bool& v) { out_ << key << " = " << (v ? "true" : "false") << "\n"; }
  void field(const std::string& key, const std::string& v) { out_ << key << " = \"" << v << "\"\n"; }
  void field(const std::string& key, const int& v) { out_ << key << " = " << v << "\n"; }
  void field(const std::string& key, const std::size_t& v) { out_ << key << " = " << v << "\n"; }
  void field(const std::string& key, const std::vector<double>& v) {
    out_ << key << " = [";
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? ", " : "") << fmt(v[i]);
    out_ << "]\n";
  }
  bool has(const std::string&) const { return true; }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

const char* feed_forward_name(FeedForward f) {
  switch (f) {
    case FeedForward::kOff: return "off";
    case FeedForward::kPost: return "post";
    case FeedForward::kLive: return "live";
  }
  return "post";
}

FeedForward feed_forward_from(const std::string& s) {
  if (s == "off") return FeedForward::kOff;
  if (s == "post") return FeedForward::kPost;
  if (s == "live") return FeedForward::kLive;
  throw ConfigError("interrogate.feed_forward: expected \"off\", \"post\" or \"live\"");
}

template <class A>
void visit_preset(A& a, NoisePreset& p) {
  a.field("b_field", p.b_field_t);
  std::vector<double> sig, tau;
  for (const auto& c : p.ou) {
    sig.push_back(c.sigma_hz);
    tau.push_back(c.tau_c_s);
  }
  a.field("ou_sigma_hz", sig);
  a.field("ou_tau_s", tau);
  if (sig.size() != tau.size()) throw ConfigError("noise." + p.name + ": ou_sigma_hz and ou_tau_s differ in length");
  p.ou.clear();
  for (std::size_t i = 0; i < sig.size(); ++i) p.ou.push_back({sig[i], tau[i]});
  a.field("telegraph_mean_spins", p.telegraph.mean_spins);
  a.field("telegraph_max_coupling_hz", p.telegraph.max_coupling_hz);
  a.field("telegraph_min_rate_hz", p.telegraph.min_rate_hz);
  a.field("telegraph_max_rate_hz", p.telegraph.max_rate_hz);
  a.field("jitter_fwhm_hz", p.jitter.fwhm_hz);
  a.field("jitter_correlation_s", p.jitter.correlation_time_s);
}

template <class A>
void visit(A& a, RunConfig& c) {
  a.section("");
  a.field("schema_version", c.schema_version);
  if (a.has("seed")) {
    a.field("seed", c.seed);
    c.seed_given = true;
  }
  a.field("b_field", c.b_field_t);
  a.field("noise_preset", c.noise_preset);
  a.field("out", c.out_dir);

  a.section("cavity");
  a.field("t_out", c.cavity.mirrors.t_out);
  a.field("t_back", c.cavity.mirrors.t_back);
  a.field("loss", c.cavity.mirrors.loss);
  a.field("roc_m", c.cavity.geometry.roc_m);
  a.field("l_opt_m", c.cavity.geometry.l_opt_m);
  a.field("wavelength_m", c.cavity.geometry.wavelength_m);
  a.field("n_host", c.cavity.geometry.n_host);
  a.field("membrane_m", c.cavity.geometry.membrane_thickness_m);
  a.field("branching", c.cavity.branching);
  double p_tl = c.cavity.p_tl_override.value_or(0.0);
  a.field("p_tl_override", p_tl);
  c.cavity.p_tl_override = p_tl > 0 ? std::optional<double>(p_tl) : std::nullopt;
  a.field("tuning_range_hz", c.tuning.range_hz);
  a.field("settle_time_s", c.tuning.settle_time_s);

  a.section("emitters");
  a.field("line_center_hz", c.line.center_hz);
  a.field("line_fwhm_hz", c.line.fwhm_hz);
  a.field("density_per_hz", c.line.density_per_hz);
  a.field("window_lo_hz", c.window.lo_hz);
  a.field("window_hi_hz", c.window.hi_hz);
  a.field("tau0_s", c.emitter_model.tau0_s);
  a.field("t2_s", c.emitter_model.t2_s);
  a.field("mode_radius_factor", c.emitter_model.mode_radius_factor);
  a.field("orientation_factor", c.emitter_model.orientation_factor);

  a.section("detection");
  a.field("eta_fiber", c.eta_fiber);
  a.field("eta_rest", c.eta_rest);
  a.field("dark_rate_hz", c.detector.dark_rate_hz);
  a.field("dead_time_s", c.detector.dead_time_s);
  a.field("pulse_period_s", c.pulse_period_s);
  a.field("background_per_hz", c.background.per_hz);
  a.field("background_reference_hz", c.background.reference_detuning_hz);
  a.field("background_lifetime_s", c.background.lifetime_s);

  a.section("target");
  a.field("freq_hz", c.target.freq_hz);
  a.field("purcell", c.target.purcell);

  a.section("scan");
  a.field("grid_lo_hz", c.scan.grid_lo_hz);
  a.field("grid_hi_hz", c.scan.grid_hi_hz);
  a.field("grid_points", c.scan.grid_points);
  a.field("pulse_fwhm_s", c.scan.pulse_fwhm_s);
  a.field("chirp_span_hz", c.scan.chirp_span_hz);
  a.field("area_rad", c.scan.area_rad);
  a.field("shots", c.scan.shots);
  a.field("co_tune", c.scan.co_tune);

  a.section("g2");
  a.field("bandwidth_hz", c.g2.bandwidth_hz);
  a.field("pulses", c.g2.pulses);
  a.field("area_rad", c.g2.area_rad);
  a.field("laser_offset_hz", c.g2.laser_offset_hz);
  a.field("diffusion", c.g2.diffusion);
  a.field("jitter", c.g2.jitter);
  a.field("max_lag", c.g2.max_lag);
  a.field("norm_min_lag", c.g2.norm_min_lag);
  a.field("fit_bunching", c.g2.fit_bunching);

  a.section("rabi");
  auto& rs = c.rabi.settings;
  a.field("photons_max", c.rabi.photons_max);
  a.field("points", c.rabi.points);
  a.field("pulse_fwhm_s", rs.pulse_duration_s);
  a.field("n_pi", rs.n_pi);
  a.field("background_per_photon", rs.background_per_photon);
  a.field("shots", rs.shots);
  a.field("decay", rs.decay);

  a.section("echo");
  auto& es = c.echo.settings;
  a.field("t_min_s", c.echo.t_min_s);
  a.field("t_max_s", c.echo.t_max_s);
  a.field("points", c.echo.points);
  a.field("pulse_fwhm_s", es.pulse_duration_s);
  a.field("static_detuning_hz", es.static_detuning_hz);
  a.field("stretch", es.stretch);
  a.field("detuned_pulses", es.detuned_pulses);
  a.field("decay", es.decay);
  a.field("shots", es.shots);
  a.field("detection_efficiency", es.detection_efficiency);

  a.section("interrogate");
  auto& ip = c.interrogate;
  a.field("targets_hz", ip.targets_hz);
  a.field("purcell", c.interrogate_purcell);
  a.field("interval_s", ip.interval_s);
  a.field("total_s", ip.total_s);
  a.field("probe_bandwidth_hz", ip.probe_bandwidth_hz);
  a.field("probe_area_rad", ip.probe_area_rad);
  a.field("grid_points", ip.grid_points);
  a.field("half_span_hz", ip.half_span_hz);
  a.field("shots_per_point", ip.shots_per_point);
  a.field("shot_period_s", ip.shot_period_s);
  a.field("gate_s", ip.gate_s);
  std::string ff = feed_forward_name(ip.feed_forward);
  a.field("feed_forward", ff);
  ip.feed_forward = feed_forward_from(ff);
  a.field("counting_noise", ip.counting_noise);
  a.field("noise", ip.noise);
  a.field("lost_after", ip.lost_after);
  a.field("reacquire_factor", ip.reacquire_factor);
}

void check(const RunConfig& c) {
  if (c.schema_version != 1) throw ConfigError("schema_version: only version 1 is supported");
  if (c.presets.empty()) throw ConfigError("no noise presets defined");
  if (c.interrogate.targets_hz.size() != c.interrogate_purcell.size())
    throw ConfigError("interrogate.purcell must list one value per target");
  try {
    validate(c.cavity.mirrors);
    validate(c.cavity.geometry);
    (void)c.selected_preset();
    validate(c.interrogate);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (!(c.window.hi_hz > c.window.lo_hz)) throw ConfigError("emitters.window_hi_hz must exceed window_lo_hz");
  if (c.pulse_period_s <= 0) throw ConfigError("detection.pulse_period_s must be > 0");
}

}  // namespace

ConfigDocument ConfigDocument::parse(const std::string& text) {
  ConfigDocument doc;
  doc.sections[""];
  std::string current;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + ": malformed section header");
      current = trim(s.substr(1, s.size() - 2));
      if (current.empty()) throw ConfigError(where + ": empty section name");
      if (doc.sections.count(current)) throw ConfigError(where + ": duplicate section [" + current + "]");
      doc.sections[current];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    auto& sec = doc.sections[current];
    if (sec.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    sec[key] = parse_value(s.substr(eq + 1), (current.empty() ? "" : current + ".") + key);
  }
  return doc;
}

const NoisePreset& RunConfig::selected_preset() const {
  std::string names;
  for (const auto& p : presets) {
    if (noise_preset.empty() ? p.b_field_t == b_field_t : p.name == noise_preset) return p;
    names += (names.empty() ? "" : ", ") + p.name + " (b_field " + fmt(p.b_field_t) + ")";
  }
  const std::string what = noise_preset.empty() ? "b_field = " + fmt(b_field_t) : "noise_preset = " + noise_preset;
  throw ConfigError("no noise preset for " + what + "; available: " + names);
}

Setup RunConfig::setup() const {
  Setup s;
  s.geometry = cavity.geometry;
  s.cavity = derive_cavity(cavity);
  s.emitter_model = emitter_model;
  s.emitter_model.p_max = s.cavity.p_branched;
  s.line = line;
  s.noise = selected_preset();
  s.eta_fiber = eta_fiber;
  s.eta_rest = eta_rest;
  s.detector = detector;
  s.pulse_period_s = pulse_period_s;
  s.background = background;
  s.tuning = tuning;
  return s;
}

Emitter RunConfig::target_emitter() const {
  return make_emitter_with_purcell(0, target.freq_hz, target.purcell, emitter_model);
}

std::vector<Emitter> RunConfig::interrogation_emitters() const {
  std::vector<Emitter> out;
  for (std::size_t i = 0; i < interrogate.targets_hz.size(); ++i)
    out.push_back(make_emitter_with_purcell(i, interrogate.targets_hz[i], interrogate_purcell[i], emitter_model));
  return out;
}

ScanPlan RunConfig::scan_plan() const {
  ScanPlan p;
  p.grid_hz = linear_grid(scan.grid_lo_hz, scan.grid_hi_hz, scan.grid_points);
  p.pulse.shape = PulseShape::kChirpedGaussian;
  p.pulse.duration_fwhm_s = scan.pulse_fwhm_s;
  p.pulse.chirp_span_hz = scan.chirp_span_hz;
  p.pulse.area_rad = scan.area_rad;
  p.shots = scan.shots;
  p.co_tune_cavity = scan.co_tune;
  return p;
}

RabiPlan RunConfig::rabi_plan() const {
  RabiPlan p;
  p.photon_numbers = linear_grid(0.0, rabi.photons_max, rabi.points);
  p.settings = rabi.settings;
  p.settings.cavity_linewidth_hz = derive_cavity(cavity).fwhm_linewidth_hz;
  p.settings.jitter = selected_preset().jitter;
  double var = 0;
  for (const auto& c : selected_preset().ou) var += c.sigma_hz * c.sigma_hz;
  p.settings.emitter_sigma_hz = std::sqrt(var);
  return p;
}

EchoPlan RunConfig::echo_plan() const {
  EchoPlan p;
  p.t_seq_s = linear_grid(echo.t_min_s, echo.t_max_s, echo.points);
  p.settings = echo.settings;
  p.settings.cavity_linewidth_hz = derive_cavity(cavity).fwhm_linewidth_hz;
  return p;
}

RunConfig default_config() {
  RunConfig c;
  c.cavity.p_tl_override = 362.0;
  c.presets = builtin_noise_presets();
  c.emitter_model.p_max = derive_cavity(c.cavity).p_branched;
  c.interrogate.targets_hz = {7.0e9, 7.0e9 + 5.3e6};
  c.rabi.settings.background_per_photon = 0.002;
  c.echo.settings.detection_efficiency = derive_cavity(c.cavity).eta_out * c.eta_fiber * c.eta_rest;
  // Enough photon counts that the T2 fit error is about 1 %.
  c.echo.settings.shots = 500000;
  return c;
}

RunConfig parse_config(const std::string& text, std::vector<std::string>* warnings) {
  Reader r(ConfigDocument::parse(text));
  RunConfig c = default_config();

  // Preset sections replace the built-in table when any are given.
  std::vector<NoisePreset> presets;
  for (const auto& [name, keys] : r.doc().sections) {
    if (name.rfind("noise.", 0) != 0) continue;
    NoisePreset p;
    p.name = name.substr(6);
    if (p.name.empty()) throw ConfigError("noise preset section needs a name");
    p.ou.clear();
    r.section(name);
    visit_preset(r, p);
    presets.push_back(p);
  }
  if (!presets.empty()) c.presets = presets;

  visit(r, c);
  r.finish();
  if (!c.seed_given && warnings) warnings->push_back("no seed given; using seed 0");
  check(c);
  c.emitter_model.p_max = derive_cavity(c.cavity).p_branched;
  return c;
}

RunConfig load_config(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), warnings);
}

std::string write_config(const RunConfig& config) {
  RunConfig c = config;
  Writer w;
  visit(w, c);
  std::string out = w.str();
  // Sections are read back in name order; write them that way.
  std::sort(c.presets.begin(), c.presets.end(),
            [](const NoisePreset& a, const NoisePreset& b) { return a.name < b.name; });
  for (auto& p : c.presets) {
    Writer pw;
    pw.section("noise." + p.name);
    visit_preset(pw, p);
    out += pw.str();
  }
  return out;
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cavsim
