#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "cavsim/rng.hpp"

namespace cavsim {

/// Probability chain from an excited emitter to a detector click.
struct EfficiencyChain {
  double eta_channel = 74.0 / 75.0;  ///< P / (P + 1)
  double eta_out = 0.34;
  double eta_fiber = 0.63;
  double eta_rest = 0.1136;  ///< free-space transmission times detector efficiency

  double total() const;
};

double total_efficiency(const EfficiencyChain& chain);

enum class ClickOrigin : std::uint8_t { kSignal = 0, kBackground = 1, kDark = 2 };

const char* origin_name(ClickOrigin origin);

struct Click {
  std::int64_t t_ns = 0;
  ClickOrigin origin = ClickOrigin::kSignal;

  bool operator==(const Click&) const = default;
};

/// Detector record. Origin tags exist for validation only; estimators never
/// read them.
struct ClickStream {
  std::vector<Click> clicks;
  std::int64_t duration_ns = 0;
  double dark_rate_hz = 0.0;

  double duration_s() const { return static_cast<double>(duration_ns) * 1e-9; }
};

struct DetectorSettings {
  double dark_rate_hz = 0.0;
  double dead_time_s = 50e-9;
};

/// One excitation attempt of an emitter.
struct Excitation {
  double time_s = 0.0;
  std::uint64_t emitter = 0;
  double p_excited = 0.0;
  double lifetime_s = 0.0;
};

/// Incremental click generator for long pulse trains. Photons are added as
/// they are generated; `finish` adds dark counts, sorts onto the 1 ns grid
/// and applies the detector dead time.
class ClickBuilder {
 public:
  ClickBuilder(const DetectorSettings& settings, std::uint64_t seed);

  /// Emits one photon with probability `p_click`, delayed by Exp(lifetime).
  void add_emission(double t_excite_s, double p_click, double lifetime_s,
                    ClickOrigin origin = ClickOrigin::kSignal);
  /// Poisson(mean) detected photons, each delayed by Exp(lifetime).
  void add_poisson(double t_excite_s, double mean, double lifetime_s,
                   ClickOrigin origin = ClickOrigin::kBackground);

  ClickStream finish(double duration_s);

  std::size_t size() const { return clicks_.size(); }

 private:
  void push(double t_s, ClickOrigin origin);

  DetectorSettings settings_;
  Rng rng_;
  Rng dark_rng_;
  std::vector<Click> clicks_;
};

/// Thins each excitation by p_excited * total efficiency, draws exponential
/// emission delays, and merges in homogeneous Poisson dark counts.
ClickStream emit_clicks(std::span<const Excitation> excitations, const EfficiencyChain& chain,
                        double dark_rate_hz, double duration_s, std::uint64_t seed,
                        double dead_time_s = 50e-9);

/// `timestamp_ns,origin` CSV; the origin column is omitted when `with_origin` is false.
void write_clicks_csv(std::ostream& os, const ClickStream& stream, bool with_origin = true);
ClickStream read_clicks_csv(std::istream& is, double dark_rate_hz = 0.0);

}  // namespace cavsim
