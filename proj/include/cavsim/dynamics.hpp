#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cavsim/constants.hpp"
#include "cavsim/emitters.hpp"
#include "cavsim/noise.hpp"

namespace cavsim {

enum class PulseShape { kGaussian, kChirpedGaussian };

/// Laser pulse with a Gaussian intensity envelope. Detunings are laser minus
/// emitter, in Hz. For chirped pulses the instantaneous detuning sweeps
/// linearly by `chirp_span_hz` per envelope FWHM.
struct Pulse {
  PulseShape shape = PulseShape::kGaussian;
  double duration_fwhm_s = 1e-6;
  double center_detuning_hz = 0.0;
  double chirp_span_hz = 0.0;
  double area_rad = kPi;
  double phase_rad = 0.0;

  /// Spectral FWHM: the transform limit for unchirped pulses, the chirp span
  /// when that is wider.
  double bandwidth_fwhm_hz() const;
  double peak_rabi_rad_s() const;
  /// Rabi frequency (rad/s) at time t from the envelope maximum.
  double rabi_at(double t_s) const;
  /// Laser-minus-emitter detuning (Hz) at time t, excluding any static offset.
  double detuning_at(double t_s) const;
  /// The envelope is integrated over [-half_window, +half_window].
  double half_window_s() const { return 3.0 * duration_fwhm_s; }
};

/// Transform-limited spectral FWHM of a Gaussian pulse, 2 ln2 / (pi tau).
double transform_limited_bandwidth(double duration_fwhm_s);

/// Transform-limited Gaussian pulse with the given spectral FWHM.
Pulse gaussian_pulse(double bandwidth_fwhm_hz, double area_rad, double phase_rad = 0.0);

struct BlochState {
  double u = 0.0;
  double v = 0.0;
  double w = -1.0;  ///< population inversion; -1 is the ground state

  double norm() const;
  double excited_population() const { return 0.5 * (w + 1.0); }
  static BlochState ground() { return {}; }
};

/// Lifetime (population decay) and coherence time; infinite disables each.
struct Relaxation {
  double lifetime_s = std::numeric_limits<double>::infinity();
  double t2_s = std::numeric_limits<double>::infinity();

  static Relaxation none() { return {}; }
  static Relaxation of(const Emitter& e) { return {e.lifetime_s, e.t2_s}; }
};

struct IntegratorOptions {
  int steps_per_fwhm = 200;       ///< lower bound on resolution of the envelope
  double max_rotation_per_step = 0.25;  ///< rad
  std::size_t max_steps = 5'000'000;
};

/// Integrates the optical Bloch equations across the pulse window with a
/// fixed-step fourth-order Magnus rotation, Strang-split with exact
/// relaxation. `static_detuning_hz` adds to the pulse's own detuning.
/// Throws InvalidArgument if the required step would underflow.
BlochState evolve_pulse(const BlochState& state, const Pulse& pulse, double static_detuning_hz,
                        const Relaxation& relax = {}, const IntegratorOptions& opts = {});

/// Exact free precession at a constant detuning with relaxation.
BlochState free_evolve(const BlochState& state, double detuning_hz, double t_s,
                       const Relaxation& relax = {});

/// Excited population after the pulse, starting from the ground state.
double excitation_probability(const Pulse& pulse, double emitter_detuning_hz,
                              const Relaxation& relax = {});

/// Tabulated excitation probability versus static detuning, for Monte-Carlo
/// loops that evaluate the same pulse many times. Zero outside the table.
class ExcitationProfile {
 public:
  ExcitationProfile() = default;
  ExcitationProfile(const Pulse& pulse, const Relaxation& relax, double half_span_hz,
                    std::size_t points);

  double operator()(double detuning_hz) const;
  double half_span_hz() const { return half_span_; }
  /// FWHM of the tabulated profile, by linear interpolation of the half-maximum crossings.
  double fwhm_hz() const;
  double peak() const;

 private:
  double half_span_ = 0.0;
  double step_ = 0.0;
  std::vector<double> table_;
};

struct ScanPoint {
  double x = 0.0;
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t shots = 0;
};

struct RabiSettings {
  double pulse_duration_s = 1e-6;
  double n_pi = 1.0;                ///< mean intracavity photon number of a resonant pi pulse
  double cavity_linewidth_hz = 13e6;
  CavityJitter jitter;
  double background_per_photon = 0.0;  ///< linear weakly-coupled background, signal per photon
  double emitter_sigma_hz = 0.0;       ///< shot-to-shot static emitter detuning spread
  std::size_t shots = 200;
  bool decay = true;
};

/// Pulse area for a mean intracavity photon number: pi sqrt(N / N_pi).
double rabi_area(double photons, double n_pi);

/// Mean fluorescence per photon number: excited population after a pulse
/// whose intensity is filtered by the jittering cavity, plus c_bg * N.
std::vector<ScanPoint> rabi_scan(const Emitter& emitter, std::span<const double> photon_numbers,
                                 const RabiSettings& settings, std::uint64_t seed);

struct EchoSequence {
  double t_seq_s = 0.0;
  std::array<double, 3> phases{0.0, 0.0, 0.0};
};

struct EchoSettings {
  double pulse_duration_s = 1e-6;  ///< FWHM of every pulse in the sequence
  double static_detuning_hz = 0.0;
  double emitter_sigma_hz = 0.0;
  double cavity_linewidth_hz = 13e6;
  CavityJitter jitter{0.0, 0.0};
  double stretch = 1.0;  ///< coherence decays as exp(-(t/T2)^stretch)
  bool decay = true;
  /// Detuning also acts during the pulses. Off: hard-pulse limit, static
  /// detunings refocus exactly. On: finite-pulse errors of order (detuning x duration)^2.
  bool detuned_pulses = false;
  std::size_t shots = 200;
  double detection_efficiency = 0.0;  ///< > 0 adds photon-counting noise
};

struct EchoResult {
  double contrast = 0.0;
  double std_err = 0.0;
  double excited_same = 0.0;      ///< mean excited population, unchanged phase
  double excited_inverted = 0.0;  ///< first pulse phase shifted by pi
};

/// Final excited population of a pi/2 - t/2 - pi - t/2 - pi/2 sequence.
/// The detuning acts during free evolution; `pulse_detuning_hz` is the
/// detuning seen during the pulses (0 for the hard-pulse limit).
double echo_excited_population(const EchoSequence& seq, double duration_s, double detuning_hz,
                               double area_scale, const Relaxation& pulse_relax,
                               const Relaxation& free_relax, double stretch, double pulse_detuning_hz);

/// Difference signal between the two first-pulse phases, normalized to the
/// ideal-pulse difference.
EchoResult echo_contrast(const Emitter& emitter, const EchoSequence& seq,
                         const EchoSettings& settings, std::uint64_t seed);

std::vector<ScanPoint> echo_scan(const Emitter& emitter, std::span<const double> t_seq_values,
                                 const EchoSettings& settings, std::uint64_t seed);

}  // namespace cavsim
