#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cavsim/analysis.hpp"
#include "cavsim/cavity.hpp"
#include "cavsim/detection.hpp"
#include "cavsim/dynamics.hpp"
#include "cavsim/emitters.hpp"
#include "cavsim/noise.hpp"

namespace cavsim {

/// Weakly coupled dopants, not tracked individually. The mean number of
/// detected background photons per pulse is
///   per_hz * bandwidth * energy * density(f) / density(reference)
/// where energy is the pulse energy relative to a resonant pi pulse.
struct BackgroundModel {
  double per_hz = 1.35e-8;
  double reference_detuning_hz = 7e9;
  double lifetime_s = 0.3e-3;
};

struct CavityTuning {
  double range_hz = 20e9;
  double settle_time_s = 0.5e-3;
};

/// Everything about the apparatus that protocols share.
struct Setup {
  CavityGeometry geometry;
  CavityDerived cavity{};
  EmitterModel emitter_model;
  InhomogeneousLine line;
  NoisePreset noise;
  double eta_fiber = 0.63;
  double eta_rest = 0.1136;
  DetectorSettings detector{8.4, 50e-9};
  double pulse_period_s = 1e-3;
  BackgroundModel background;
  CavityTuning tuning;

  /// Efficiency chain of an emitter whose Purcell factor is reduced by the
  /// cavity transmission at `cavity_detuning_hz`.
  EfficiencyChain chain_for(const Emitter& e, double cavity_detuning_hz = 0.0) const;
  /// Fraction of emission within one pulse period.
  double collection_fraction(double lifetime_s) const;
  /// Mean detected background photons per pulse.
  double background_mean(double laser_hz, double bandwidth_hz, double energy) const;
};

/// Setup built from the reference cavity and default parameters.
Setup default_setup();

struct RetuneRecord {
  double from_hz = 0.0;
  double to_hz = 0.0;
  double settle_s = 0.0;
  bool retuned = false;
};

/// Cavity resonance bookkeeping. `switch_to` always sets the resonance;
/// `address` retunes only when the target falls outside half a linewidth.
class CavityTuner {
 public:
  CavityTuner(const CavityTuning& tuning, double linewidth_hz, double initial_hz = 0.0);

  RetuneRecord switch_to(double target_hz);
  RetuneRecord address(double target_hz);

  double resonance_hz() const { return resonance_; }
  int retune_count() const { return retunes_; }
  double settle_total_s() const { return settle_total_; }

 private:
  CavityTuning tuning_;
  double linewidth_;
  double resonance_;
  int retunes_ = 0;
  double settle_total_ = 0.0;
};

struct ScanPlan {
  std::vector<double> grid_hz;
  Pulse pulse;  ///< chirped excitation; its area applies to an emitter with P = p_max
  std::size_t shots = 1000;
  bool co_tune_cavity = true;
};

struct SpectrumPoint {
  double detuning_hz = 0.0;
  double signal = 0.0;  ///< detected counts per shot
  double error = 0.0;
  std::uint64_t counts = 0;
  std::size_t shots = 0;
};

/// Linear grid helper: `points` values from lo to hi inclusive.
std::vector<double> linear_grid(double lo, double hi, std::size_t points);

/// Fraction of emitters, averaged over the sampled mode cylinder, whose
/// resonant scan signal exceeds `threshold` counts per shot.
double detectable_fraction(const ScanPlan& plan, const Setup& setup, double threshold,
                           std::size_t radial_points = 120, std::size_t axial_points = 400);

/// Mean detected counts per shot from one emitter at a laser detuning (no darks).
double scan_signal(const Emitter& e, double laser_hz, const ScanPlan& plan, const Setup& setup,
                   double cavity_hz);

/// Broadband fluorescence spectrum: Poisson counts per grid point from all
/// emitters within reach of the chirped pulse plus background and darks.
std::vector<SpectrumPoint> run_spectral_scan(std::span<const Emitter> ensemble, const ScanPlan& plan,
                                             const Setup& setup, std::uint64_t seed);

struct G2Plan {
  double bandwidth_hz = 0.55e6;
  std::size_t pulses = 100'000;
  double area_rad = kPi;
  double laser_offset_hz = 0.0;  ///< laser minus the emitter's nominal frequency
  bool diffusion = true;
  bool jitter = true;
  int max_lag = 1000;
  int norm_min_lag = 500;
  bool fit_bunching = false;
  bool keep_stream = false;
};

struct G2Run {
  G2Histogram histogram;
  double raw_g2_zero = 0.0;
  double dark_fraction = 0.0;
  double rescaled_g2_zero = 0.0;
  std::optional<FitResult> bunching;
  std::size_t clicks = 0;
  std::size_t signal_clicks = 0;
  std::size_t background_clicks = 0;
  std::size_t dark_clicks = 0;
  ClickStream stream;  ///< filled only when keep_stream is set
};

/// Pulsed excitation -> clicks -> g2 for one emitter held on cavity resonance.
G2Run run_g2_experiment(const Emitter& emitter, const G2Plan& plan, const Setup& setup, std::uint64_t seed);

struct RabiPlan {
  std::vector<double> photon_numbers;
  RabiSettings settings;
  bool fit = true;
};

struct RabiRun {
  std::vector<ScanPoint> points;
  std::optional<FitResult> fit;
};

RabiRun run_rabi(const Emitter& emitter, const RabiPlan& plan, std::uint64_t seed);

struct EchoPlan {
  std::vector<double> t_seq_s;
  EchoSettings settings;
};

struct EchoRun {
  std::vector<ScanPoint> points;
  FitResult fit;
};

EchoRun run_echo(const Emitter& emitter, const EchoPlan& plan, std::uint64_t seed);

enum class FeedForward { kOff, kPost, kLive };

struct InterrogationPlan {
  std::vector<double> targets_hz;
  double interval_s = 360.0;
  double total_s = 21600.0;
  double probe_bandwidth_hz = 0.02e6;
  double probe_area_rad = kPi;
  std::size_t grid_points = 25;
  double half_span_hz = 0.3e6;
  std::size_t shots_per_point = 100;  ///< per sweep
  double shot_period_s = 0.5e-3;
  double gate_s = 0.45e-3;  ///< detection window after each probe pulse
  FeedForward feed_forward = FeedForward::kPost;
  bool counting_noise = true;
  bool noise = true;
  int lost_after = 3;
  double reacquire_factor = 4.0;
};

struct IntervalRecord {
  std::size_t interval = 0;
  std::size_t target = 0;
  double scan_center_hz = 0.0;
  double center_hz = 0.0;
  double center_error_hz = 0.0;
  double width_hz = 0.0;
  double width_error_hz = 0.0;
  bool fit_ok = false;
  bool lost = false;
  double true_offset_hz = 0.0;  ///< emitter offset at the interval end, for validation
};

struct CenterPairs {
  std::vector<std::size_t> interval;
  std::vector<double> a_hz;
  std::vector<double> b_hz;
  /// Interval-to-interval changes, only across adjacent intervals.
  CenterPairs increments() const;
};

struct AggregateLine {
  std::size_t target = 0;
  std::vector<SpectrumPoint> raw;        ///< relative to the nominal target frequency
  std::vector<SpectrumPoint> corrected;  ///< after feed-forward alignment
  std::optional<FitResult> raw_fit;
  std::optional<FitResult> corrected_fit;
};

struct InterrogationResult {
  std::vector<IntervalRecord> records;
  std::vector<AggregateLine> aggregates;
  std::vector<std::size_t> target_emitters;
  int cavity_retunes = 0;

  /// Fitted centers of one target, in interval order (failed fits skipped).
  std::vector<double> centers(std::size_t target) const;
  /// Centers of two targets over the intervals where both fits succeeded.
  CenterPairs paired_centers(std::size_t a, std::size_t b) const;
  double center_correlation(std::size_t a, std::size_t b) const;
};

void validate(const InterrogationPlan& plan);

/// Alternating long-term interrogation of the emitters nearest to the plan's
/// target frequencies, with per-interval line fits and aggregates.
InterrogationResult run_interrogation(std::span<const Emitter> ensemble, const InterrogationPlan& plan,
                                      const Setup& setup, std::uint64_t seed);

void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumPoint>& pts);
void write_scan_csv(std::ostream& os, const std::vector<ScanPoint>& pts, const char* x_name);
void write_intervals_csv(std::ostream& os, const std::vector<IntervalRecord>& records);
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateLine>& lines);

}  // namespace cavsim
