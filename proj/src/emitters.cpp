#include "cavsim/emitters.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "cavsim/constants.hpp"
#include "cavsim/error.hpp"
#include "cavsim/rng.hpp"

namespace cavsim {

double InhomogeneousLine::density_at(double f) const {
  const double x = 2.0 * (f - center_hz) / fwhm_hz;
  return density_per_hz / (1.0 + x * x);
}

double InhomogeneousLine::expected_count(double lo, double hi) const {
  require(fwhm_hz > 0, "inhomogeneous FWHM must be > 0");
  require(density_per_hz >= 0, "emitter density must be >= 0");
  const double hw = 0.5 * fwhm_hz;
  return density_per_hz * hw * (std::atan((hi - center_hz) / hw) - std::atan((lo - center_hz) / hw));
}

double purcell_lifetime(double p, double tau0_s) {
  require(p >= 0, "Purcell factor must be >= 0");
  require(tau0_s > 0, "free-space lifetime must be > 0");
  return tau0_s / (1.0 + p);
}

double channeling_efficiency(double p) {
  require(p >= 0, "Purcell factor must be >= 0");
  if (std::isinf(p)) return 1.0;
  return p / (1.0 + p);
}

double radiative_fwhm(double lifetime_s) {
  require(lifetime_s > 0, "lifetime must be > 0");
  return 1.0 / (kTwoPi * lifetime_s);
}

double homogeneous_linewidth(double t2_s) {
  require(t2_s > 0, "T2 must be > 0");
  return 1.0 / (kPi * t2_s);
}

namespace {

Emitter finish_emitter(Emitter e, const EmitterModel& model) {
  e.lifetime_s = purcell_lifetime(e.purcell, model.tau0_s);
  // A coherence time beyond 2 T1 is unphysical; clamp.
  e.t2_s = std::min(model.t2_s, 2.0 * e.lifetime_s);
  return e;
}

}  // namespace

Emitter make_emitter(std::uint64_t id, double freq0_hz, const ModePosition& pos,
                     const CavityGeometry& geometry, const EmitterModel& model) {
  Emitter e;
  e.id = id;
  e.freq0_hz = freq0_hz;
  e.position = pos;
  e.coupling = mode_coupling(pos, geometry);
  e.purcell = model.p_max * e.coupling * model.orientation_factor;
  return finish_emitter(e, model);
}

Emitter make_emitter_with_purcell(std::uint64_t id, double freq0_hz, double purcell,
                                  const EmitterModel& model) {
  require(model.p_max > 0, "p_max must be > 0");
  Emitter e;
  e.id = id;
  e.freq0_hz = freq0_hz;
  e.purcell = purcell;
  e.coupling = std::min(1.0, purcell / model.p_max);
  return finish_emitter(e, model);
}

std::vector<Emitter> sample_ensemble(const InhomogeneousLine& line, const FrequencyWindow& window,
                                     const CavityGeometry& geometry, const EmitterModel& model,
                                     std::uint64_t seed) {
  if (!(window.hi_hz > window.lo_hz)) throw InvalidArgument("empty detuning window");
  const double mean = line.expected_count(window.lo_hz, window.hi_hz);
  require(std::isfinite(mean), "emitter density must be finite");
  std::vector<Emitter> out;
  if (mean <= 0) return out;

  Rng rng = make_stream(seed, Stream::kEnsemble);
  const auto n = std::poisson_distribution<std::uint64_t>(mean)(rng);
  const double hw = 0.5 * line.fwhm_hz;
  const double a = std::atan((window.lo_hz - line.center_hz) / hw);
  const double b = std::atan((window.hi_hz - line.center_hz) / hw);
  const double r_max = model.mode_radius_factor * mode_waist(geometry);
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double u = a + (b - a) * uniform01(rng);
    const double f = std::clamp(line.center_hz + hw * std::tan(u), window.lo_hz, window.hi_hz);
    ModePosition pos;
    pos.r_m = r_max * std::sqrt(uniform01(rng));
    pos.z_m = geometry.membrane_thickness_m * uniform01(rng);
    out.push_back(make_emitter(i, f, pos, geometry, model));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Emitter& x, const Emitter& y) { return x.freq0_hz < y.freq0_hz; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = i;
  return out;
}

std::string ensemble_to_json(const std::vector<Emitter>& ensemble) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : ensemble) {
    arr.push_back({{"id", e.id},
                   {"freq0_hz", e.freq0_hz},
                   {"r_m", e.position.r_m},
                   {"z_m", e.position.z_m},
                   {"coupling", e.coupling},
                   {"purcell", e.purcell},
                   {"lifetime_s", e.lifetime_s},
                   {"t2_s", e.t2_s}});
  }
  return nlohmann::json{{"emitters", arr}}.dump(2);
}

std::vector<Emitter> ensemble_from_json(const std::string& text) {
  std::vector<Emitter> out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& j : doc.at("emitters")) {
      Emitter e;
      e.id = j.at("id").get<std::uint64_t>();
      e.freq0_hz = j.at("freq0_hz").get<double>();
      e.position.r_m = j.at("r_m").get<double>();
      e.position.z_m = j.at("z_m").get<double>();
      e.coupling = j.at("coupling").get<double>();
      e.purcell = j.at("purcell").get<double>();
      e.lifetime_s = j.at("lifetime_s").get<double>();
      e.t2_s = j.at("t2_s").get<double>();
      out.push_back(e);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("malformed ensemble document: ") + ex.what());
  }
  return out;
}

}  // namespace cavsim
