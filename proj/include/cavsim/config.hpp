#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cavsim/protocols.hpp"

namespace cavsim {

/// Value of one `key = value` line. Numbers keep their source text so that
/// 64-bit integers survive.
struct ConfigValue {
  enum class Kind { kBool, kNumber, kString, kArray } kind = Kind::kNumber;
  bool boolean = false;
  double number = 0.0;
  std::string text;
  std::vector<double> array;
};

/// Parsed TOML-style document: `[section]` headers (dotted names allowed),
/// `key = value` with numbers, booleans, quoted strings and flat numeric
/// arrays; `#` starts a comment. Keys before any header live in section "".
class ConfigDocument {
 public:
  static ConfigDocument parse(const std::string& text);

  std::map<std::string, std::map<std::string, ConfigValue>> sections;
};

/// Emitter built directly from a prescribed Purcell factor.
struct TargetSpec {
  double freq_hz = 7e9;
  double purcell = 70.0;
};

struct ScanSettings {
  double grid_lo_hz = 5e9;
  double grid_hi_hz = 9e9;
  std::size_t grid_points = 8001;
  double pulse_fwhm_s = 5e-6;
  double chirp_span_hz = 0.5e6;
  double area_rad = 2.0 * kPi;
  std::size_t shots = 50000;
  bool co_tune = true;
};

struct RabiConfig {
  double photons_max = 40.0;
  std::size_t points = 41;
  RabiSettings settings;
};

struct EchoConfig {
  double t_min_s = 10e-6;
  double t_max_s = 300e-6;
  std::size_t points = 30;
  EchoSettings settings;
};

struct RunConfig {
  int schema_version = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double b_field_t = 6.8;
  std::string noise_preset;  ///< overrides the b_field selection when set
  std::string out_dir = "out";

  CavityParams cavity;
  InhomogeneousLine line;
  FrequencyWindow window;
  EmitterModel emitter_model;  ///< p_max is derived from the cavity
  double eta_fiber = 0.63;
  double eta_rest = 0.1136;
  DetectorSettings detector{8.4, 50e-9};
  double pulse_period_s = 1e-3;
  BackgroundModel background;
  CavityTuning tuning;
  std::vector<NoisePreset> presets;

  TargetSpec target;
  ScanSettings scan;
  G2Plan g2;
  RabiConfig rabi;
  EchoConfig echo;
  InterrogationPlan interrogate;
  std::vector<double> interrogate_purcell{70.0, 70.0};

  /// The noise preset chosen by name or by b_field.
  const NoisePreset& selected_preset() const;
  /// Apparatus with the derived cavity and the selected preset.
  Setup setup() const;
  Emitter target_emitter() const;
  std::vector<Emitter> interrogation_emitters() const;
  ScanPlan scan_plan() const;
  RabiPlan rabi_plan() const;
  EchoPlan echo_plan() const;
};

/// Defaults reproducing the reference device and experiments.
RunConfig default_config();

/// Strict parse: unknown sections or keys and wrongly typed values throw
/// ConfigError naming the key. Missing keys keep their defaults.
RunConfig parse_config(const std::string& text, std::vector<std::string>* warnings = nullptr);
RunConfig load_config(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Serializes every field; parse_config(write_config(c)) reproduces c.
std::string write_config(const RunConfig& config);

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string content_hash(const std::string& text);

}  // namespace cavsim
