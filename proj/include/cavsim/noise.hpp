#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cavsim/emitters.hpp"
#include "cavsim/rng.hpp"

namespace cavsim {

/// Ornstein-Uhlenbeck frequency offset with stationary law N(0, sigma^2).
struct OUProcess {
  double sigma_hz = 0.0;
  double tau_c_s = 80e-3;
  double value_hz = 0.0;
};

/// Exact OU update over `dt` (no discretization error).
OUProcess ou_step(const OUProcess& process, double dt_s, Rng& rng);

/// One proximal nuclear spin: the emitter sees +coupling/2 or -coupling/2.
struct TelegraphSpin {
  double coupling_hz = 0.0;
  double flip_rate_hz = 0.0;
  int state = 1;
};

/// Flips the spin if an odd number of Poisson flip events occur within `dt`.
TelegraphSpin telegraph_step(const TelegraphSpin& spin, double dt_s, Rng& rng);

/// Per-shot cavity resonance detuning. `correlation_time_s == 0` draws an
/// independent Gaussian per shot; otherwise the detuning follows an OU
/// process with that correlation time.
struct CavityJitter {
  double fwhm_hz = 6e6;
  double correlation_time_s = 0.0;
};

double cavity_detuning_sample(const CavityJitter& jitter, Rng& rng);

/// Stateful jitter source honoring the correlated mode.
class CavityJitterSource {
 public:
  CavityJitterSource(const CavityJitter& jitter, Rng rng);
  /// Detuning for a shot `dt_s` after the previous one.
  double next(double dt_s);

 private:
  CavityJitter jitter_;
  Rng rng_;
  OUProcess ou_;
};

struct OUComponent {
  double sigma_hz = 0.0;
  double tau_c_s = 80e-3;
};

/// Distribution from which each emitter's proximal 29Si spins are drawn.
struct TelegraphModel {
  double mean_spins = 0.0;
  double max_coupling_hz = 0.36e6;
  double min_rate_hz = 1.0 / (72 * 3600.0);
  double max_rate_hz = 1.0 / (12 * 3600.0);
};

/// Noise parameters selected by the magnetic-field label.
struct NoisePreset {
  std::string name = "b6_8";
  double b_field_t = 6.8;
  std::vector<OUComponent> ou;
  TelegraphModel telegraph;
  CavityJitter jitter;

  /// Stationary FWHM of the OU part alone.
  double ou_fwhm_hz() const;
};

/// Presets shipped with the library: b6_8, b2_0 (same values, no
/// low-field calibration exists) and slow_wander.
std::vector<NoisePreset> builtin_noise_presets();
/// Throws ConfigError listing the available names.
NoisePreset builtin_noise_preset(const std::string& name);

/// Spectral-diffusion state of one emitter: a sum of OU components plus
/// telegraph spins. The random stream is keyed by (seed, emitter id), so the
/// trajectory is independent of any other emitter's and of scheduling.
class EmitterNoise {
 public:
  EmitterNoise() = default;
  EmitterNoise(const NoisePreset& preset, std::uint64_t seed, std::uint64_t emitter_id);
  /// Explicit processes, starting at the given values.
  EmitterNoise(std::vector<OUProcess> ou, std::vector<TelegraphSpin> spins, std::uint64_t seed,
               std::uint64_t emitter_id);

  void advance(double dt_s);
  void advance_to(double t_s);

  double time() const { return t_; }
  /// Zero-mean frequency offset at the current time.
  double offset_hz() const;
  const std::vector<OUProcess>& ou() const { return ou_; }
  const std::vector<TelegraphSpin>& spins() const { return spins_; }

 private:
  void refresh_factors(double dt_s);

  std::vector<OUProcess> ou_;
  std::vector<TelegraphSpin> spins_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double t_ = 0.0;
  double cached_dt_ = -1.0;
  std::vector<double> decay_;
  std::vector<double> kick_;
  std::vector<double> flip_prob_;
};

/// freq0 + OU offsets + sum over spins of coupling * state / 2.
double emitter_frequency(const Emitter& e, const EmitterNoise& noise);

struct NoiseTraceRow {
  double time_s;
  std::uint64_t emitter_id;
  double offset_hz;
};

void write_noise_trace_csv(std::ostream& os, const std::vector<NoiseTraceRow>& rows);

}  // namespace cavsim
