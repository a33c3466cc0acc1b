#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cavsim/cavity.hpp"

namespace cavsim {

/// Lorentzian inhomogeneous line. `density_per_hz` is the expected number of
/// emitters per Hz at line center.
struct InhomogeneousLine {
  double center_hz = 0.0;
  double fwhm_hz = 414e6;
  double density_per_hz = 2.6e-5;

  double density_at(double freq_hz) const;
  /// Expected number of emitters with frequency in [lo, hi].
  double expected_count(double lo_hz, double hi_hz) const;
};

struct FrequencyWindow {
  double lo_hz = 5e9;
  double hi_hz = 9e9;
};

/// Per-emitter quantities that do not depend on where the emitter sits.
struct EmitterModel {
  double p_max = 74.0;               ///< branched Purcell factor at the mode maximum
  double tau0_s = 11.4e-3;           ///< free-space lifetime
  double t2_s = 0.115e-3;            ///< optical coherence time
  double mode_radius_factor = 1.5;   ///< sampled cylinder radius in units of the waist
  double orientation_factor = 1.0;
};

struct Emitter {
  std::uint64_t id = 0;
  double freq0_hz = 0.0;  ///< nominal detuning from the inhomogeneous line center
  ModePosition position;
  double coupling = 1.0;  ///< relative mode intensity at the emitter
  double purcell = 0.0;
  double lifetime_s = 0.0;
  double t2_s = 0.0;

  bool operator==(const Emitter&) const = default;
};

/// tau0 / (1 + P).
double purcell_lifetime(double p, double tau0_s);

/// Fraction of emission into the cavity mode, P / (1 + P).
double channeling_efficiency(double p);

/// Lifetime-limited FWHM, 1 / (2 pi tau).
double radiative_fwhm(double lifetime_s);

/// Homogeneous FWHM from the coherence time, 1 / (pi T2).
double homogeneous_linewidth(double t2_s);

/// Builds an emitter at a given position, deriving P, lifetime and T2.
Emitter make_emitter(std::uint64_t id, double freq0_hz, const ModePosition& pos,
                     const CavityGeometry& geometry, const EmitterModel& model);

/// Emitter with a prescribed Purcell factor (position left at the mode center).
Emitter make_emitter_with_purcell(std::uint64_t id, double freq0_hz, double purcell,
                                  const EmitterModel& model);

/// Samples the emitters resonant within `window`: Poisson count, truncated
/// Lorentzian frequencies, uniform positions in the mode cylinder across the
/// membrane. The result is sorted by frequency and fully determined by `seed`.
std::vector<Emitter> sample_ensemble(const InhomogeneousLine& line, const FrequencyWindow& window,
                                     const CavityGeometry& geometry, const EmitterModel& model,
                                     std::uint64_t seed);

std::string ensemble_to_json(const std::vector<Emitter>& ensemble);
std::vector<Emitter> ensemble_from_json(const std::string& text);

}  // namespace cavsim
