#include "cavsim/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "cavsim/constants.hpp"
#include "cavsim/error.hpp"

namespace cavsim {

OUProcess ou_step(const OUProcess& p, double dt, Rng& rng) {
  require(dt >= 0, "time step must be >= 0");
  require(p.tau_c_s > 0 && p.sigma_hz >= 0, "OU process needs tau_c > 0 and sigma >= 0");
  if (dt == 0) return p;
  OUProcess out = p;
  const double decay = std::exp(-dt / p.tau_c_s);
  const double kick = p.sigma_hz * std::sqrt(-std::expm1(-2.0 * dt / p.tau_c_s));
  out.value_hz = p.value_hz * decay + kick * standard_normal(rng);
  return out;
}

TelegraphSpin telegraph_step(const TelegraphSpin& s, double dt, Rng& rng) {
  require(dt >= 0, "time step must be >= 0");
  require(s.flip_rate_hz >= 0, "flip rate must be >= 0");
  TelegraphSpin out = s;
  if (dt == 0 || s.flip_rate_hz == 0) return out;
  // P(odd Poisson count with mean m) = (1 - exp(-2m)) / 2
  const double p_flip = -0.5 * std::expm1(-2.0 * s.flip_rate_hz * dt);
  if (uniform01(rng) < p_flip) out.state = -out.state;
  return out;
}

double cavity_detuning_sample(const CavityJitter& j, Rng& rng) {
  require(j.fwhm_hz >= 0, "jitter FWHM must be >= 0");
  if (j.fwhm_hz == 0) return 0.0;
  return gaussian_sigma_from_fwhm(j.fwhm_hz) * standard_normal(rng);
}

CavityJitterSource::CavityJitterSource(const CavityJitter& jitter, Rng rng)
    : jitter_(jitter), rng_(std::move(rng)) {
  require(jitter.fwhm_hz >= 0 && jitter.correlation_time_s >= 0, "invalid cavity jitter");
  ou_.sigma_hz = gaussian_sigma_from_fwhm(jitter.fwhm_hz);
  ou_.tau_c_s = jitter.correlation_time_s > 0 ? jitter.correlation_time_s : 1.0;
  ou_.value_hz = ou_.sigma_hz * standard_normal(rng_);
}

double CavityJitterSource::next(double dt) {
  if (jitter_.correlation_time_s <= 0) return cavity_detuning_sample(jitter_, rng_);
  ou_ = ou_step(ou_, dt, rng_);
  return ou_.value_hz;
}

double NoisePreset::ou_fwhm_hz() const {
  double var = 0;
  for (const auto& c : ou) var += c.sigma_hz * c.sigma_hz;
  return gaussian_fwhm_from_sigma(std::sqrt(var));
}

std::vector<NoisePreset> builtin_noise_presets() {
  // Fast 80 ms wander plus a slow component that sets the scatter of
  // interval-averaged centers; together FWHM 0.152 MHz.
  NoisePreset high;
  high.name = "b6_8";
  high.b_field_t = 6.8;
  high.ou = {{46e3, 80e-3}, {45e3, 1800.0}};
  high.telegraph.mean_spins = 0.3;

  NoisePreset low = high;
  low.name = "b2_0";
  low.b_field_t = 2.0;

  NoisePreset slow = high;
  slow.name = "slow_wander";
  slow.ou = {{30e3, 80e-3}, {58e3, 1800.0}};
  slow.telegraph.mean_spins = 0.0;

  return {high, low, slow};
}

NoisePreset builtin_noise_preset(const std::string& name) {
  std::string names;
  for (auto& p : builtin_noise_presets()) {
    if (p.name == name) return p;
    names += (names.empty() ? "" : ", ") + p.name;
  }
  throw ConfigError("unknown noise preset '" + name + "' (available: " + names + ")");
}

EmitterNoise::EmitterNoise(const NoisePreset& preset, std::uint64_t seed, std::uint64_t id)
    : rng_(make_stream(seed, Stream::kNoise, id)) {
  Rng setup = make_stream(seed, Stream::kTelegraphSetup, id);
  for (const auto& c : preset.ou) {
    require(c.sigma_hz >= 0 && c.tau_c_s > 0, "OU component needs sigma >= 0 and tau_c > 0");
    ou_.push_back({c.sigma_hz, c.tau_c_s, c.sigma_hz * standard_normal(setup)});
  }
  const auto& tm = preset.telegraph;
  if (tm.mean_spins > 0) {
    require(tm.min_rate_hz > 0 && tm.max_rate_hz >= tm.min_rate_hz, "invalid telegraph flip-rate range");
    const auto k = std::poisson_distribution<int>(tm.mean_spins)(setup);
    const double log_lo = std::log(tm.min_rate_hz);
    const double log_hi = std::log(tm.max_rate_hz);
    for (int i = 0; i < k; ++i) {
      TelegraphSpin s;
      s.coupling_hz = tm.max_coupling_hz * uniform01(setup);
      s.flip_rate_hz = std::exp(log_lo + (log_hi - log_lo) * uniform01(setup));
      s.state = uniform01(setup) < 0.5 ? -1 : 1;
      spins_.push_back(s);
    }
  }
}

EmitterNoise::EmitterNoise(std::vector<OUProcess> ou, std::vector<TelegraphSpin> spins,
                           std::uint64_t seed, std::uint64_t id)
    : ou_(std::move(ou)), spins_(std::move(spins)), rng_(make_stream(seed, Stream::kNoise, id)) {
  for (const auto& p : ou_) require(p.sigma_hz >= 0 && p.tau_c_s > 0, "invalid OU process");
}

void EmitterNoise::refresh_factors(double dt) {
  cached_dt_ = dt;
  decay_.resize(ou_.size());
  kick_.resize(ou_.size());
  flip_prob_.resize(spins_.size());
  for (std::size_t i = 0; i < ou_.size(); ++i) {
    decay_[i] = std::exp(-dt / ou_[i].tau_c_s);
    kick_[i] = ou_[i].sigma_hz * std::sqrt(-std::expm1(-2.0 * dt / ou_[i].tau_c_s));
  }
  for (std::size_t i = 0; i < spins_.size(); ++i)
    flip_prob_[i] = -0.5 * std::expm1(-2.0 * spins_[i].flip_rate_hz * dt);
}

void EmitterNoise::advance(double dt) {
  require(dt >= 0, "time step must be >= 0");
  if (dt == 0) return;
  if (dt != cached_dt_) refresh_factors(dt);
  for (std::size_t i = 0; i < ou_.size(); ++i)
    ou_[i].value_hz = ou_[i].value_hz * decay_[i] + kick_[i] * normal_(rng_);
  for (std::size_t i = 0; i < spins_.size(); ++i)
    if (uniform01(rng_) < flip_prob_[i]) spins_[i].state = -spins_[i].state;
  t_ += dt;
}

void EmitterNoise::advance_to(double t) {
  const double slack = 1e-12 * std::max(1.0, std::abs(t));
  require(t >= t_ - slack, "noise state cannot be evolved backwards in time");
  if (t > t_) advance(t - t_);
  t_ = std::max(t_, t);
}

double EmitterNoise::offset_hz() const {
  double f = 0;
  for (const auto& p : ou_) f += p.value_hz;
  for (const auto& s : spins_) f += 0.5 * s.coupling_hz * s.state;
  return f;
}

double emitter_frequency(const Emitter& e, const EmitterNoise& noise) {
  return e.freq0_hz + noise.offset_hz();
}

void write_noise_trace_csv(std::ostream& os, const std::vector<NoiseTraceRow>& rows) {
  os << "time_s,emitter_id,offset_hz\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g,%llu,%.6f\n", r.time_s,
                  static_cast<unsigned long long>(r.emitter_id), r.offset_hz);
    os << buf;
  }
}

}  // namespace cavsim
