#include "cavsim/protocols.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>

#include "cavsim/constants.hpp"
#include "cavsim/error.hpp"
#include "cavsim/rng.hpp"

namespace cavsim {

EfficiencyChain Setup::chain_for(const Emitter& e, double cavity_detuning_hz) const {
  const double p = e.purcell * cavity_transmission(cavity_detuning_hz, cavity.fwhm_linewidth_hz);
  return {channeling_efficiency(p), cavity.eta_out, eta_fiber, eta_rest};
}

double Setup::collection_fraction(double lifetime_s) const {
  if (!(lifetime_s > 0)) return 1.0;
  return -std::expm1(-pulse_period_s / lifetime_s);
}

double Setup::background_mean(double laser_hz, double bandwidth_hz, double energy) const {
  const double ref = line.density_at(background.reference_detuning_hz);
  if (ref <= 0) return 0.0;
  return background.per_hz * bandwidth_hz * energy * line.density_at(laser_hz) / ref;
}

Setup default_setup() {
  Setup s;
  CavityParams params;
  params.p_tl_override = 362.0;
  s.geometry = params.geometry;
  s.cavity = derive_cavity(params);
  s.emitter_model.p_max = s.cavity.p_branched;
  s.noise = builtin_noise_preset("b6_8");
  return s;
}

CavityTuner::CavityTuner(const CavityTuning& tuning, double linewidth_hz, double initial_hz)
    : tuning_(tuning), linewidth_(linewidth_hz), resonance_(initial_hz) {
  require(linewidth_hz > 0, "cavity linewidth must be > 0");
  require(tuning.range_hz > 0 && tuning.settle_time_s >= 0, "invalid cavity tuning range or settle time");
}

RetuneRecord CavityTuner::switch_to(double target_hz) {
  require(std::abs(target_hz) <= tuning_.range_hz, "cavity target outside the tuning range");
  RetuneRecord r{resonance_, target_hz, 0.0, target_hz != resonance_};
  if (r.retuned) {
    r.settle_s = tuning_.settle_time_s;
    resonance_ = target_hz;
    ++retunes_;
    settle_total_ += r.settle_s;
  }
  return r;
}

RetuneRecord CavityTuner::address(double target_hz) {
  if (std::abs(target_hz - resonance_) <= 0.5 * linewidth_) return {resonance_, resonance_, 0.0, false};
  return switch_to(target_hz);
}

std::vector<double> linear_grid(double lo, double hi, std::size_t points) {
  require(points >= 2 && hi > lo, "grid needs hi > lo and at least two points");
  std::vector<double> g(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo + step * static_cast<double>(i);
  return g;
}

namespace {

double scan_reach(const Pulse& p) {
  return 1.5 * p.chirp_span_hz + 10.0 * transform_limited_bandwidth(p.duration_fwhm_s);
}

void validate(const ScanPlan& plan) {
  require(!plan.grid_hz.empty(), "scan grid is empty");
  require(plan.shots > 0, "scan needs at least one shot per point");
  require(plan.pulse.duration_fwhm_s > 0 && plan.pulse.area_rad > 0, "scan pulse needs positive duration and area");
}

// Excitation probability on a grid of (area scale, detuning), shared between
// runs that use the same pulse and emitter relaxation.
struct Surface {
  double s_min = 1.0;
  double s_step = 1.0;
  std::vector<ExcitationProfile> rows;

  double operator()(double scale, double det) const {
    if (rows.size() == 1) return rows[0](det);
    const double u = std::clamp((scale - s_min) / s_step, 0.0, static_cast<double>(rows.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(u), rows.size() - 2);
    const double f = u - static_cast<double>(i);
    return rows[i](det) * (1.0 - f) + rows[i + 1](det) * f;
  }
};

std::shared_ptr<const Surface> excitation_surface(const Pulse& pulse, const Relaxation& relax,
                                                  double half_span, double step, double s_min) {
  using Key = std::array<double, 7>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const Surface>> cache;
  const Key key{pulse.duration_fwhm_s, pulse.area_rad, relax.lifetime_s, relax.t2_s, half_span, step, s_min};
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto s = std::make_shared<Surface>();
  const auto points = static_cast<std::size_t>(std::ceil(2.0 * half_span / step)) + 1;
  const std::size_t n_rows = s_min < 1.0 ? static_cast<std::size_t>(std::ceil((1.0 - s_min) / 0.025)) + 1 : 1;
  s->s_min = s_min;
  s->s_step = n_rows > 1 ? (1.0 - s_min) / static_cast<double>(n_rows - 1) : 1.0;
  for (std::size_t i = 0; i < n_rows; ++i) {
    Pulse p = pulse;
    p.area_rad = pulse.area_rad * (s_min + s->s_step * static_cast<double>(i));
    if (n_rows == 1) p.area_rad = pulse.area_rad;
    s->rows.emplace_back(p, relax, half_span, points);
  }
  std::lock_guard lock(mu);
  if (cache.size() > 64) cache.clear();
  return cache.emplace(key, std::move(s)).first->second;
}

double noise_reach(const NoisePreset& preset) {
  double var = 0;
  for (const auto& c : preset.ou) var += c.sigma_hz * c.sigma_hz;
  const double spins = preset.telegraph.mean_spins > 0 ? preset.telegraph.max_coupling_hz * 2.0 : 0.0;
  return 8.0 * std::sqrt(var) + spins;
}

}  // namespace

double scan_signal(const Emitter& e, double laser_hz, const ScanPlan& plan, const Setup& setup,
                   double cavity_hz) {
  const double kappa = setup.cavity.fwhm_linewidth_hz;
  const double drive = cavity_transmission(laser_hz - cavity_hz, kappa);
  const double coupling = setup.emitter_model.p_max > 0 ? e.purcell / setup.emitter_model.p_max : 0.0;
  Pulse p = plan.pulse;
  p.area_rad = plan.pulse.area_rad * std::sqrt(std::max(coupling, 0.0) * drive);
  if (p.area_rad <= 0) return 0.0;
  const EfficiencyChain chain = setup.chain_for(e, e.freq0_hz - cavity_hz);
  const double lifetime = purcell_lifetime(e.purcell * cavity_transmission(e.freq0_hz - cavity_hz, kappa),
                                           setup.emitter_model.tau0_s);
  const double pexc = excitation_probability(p, laser_hz - e.freq0_hz, Relaxation{lifetime, e.t2_s});
  return pexc * chain.total() * setup.collection_fraction(lifetime);
}

std::vector<SpectrumPoint> run_spectral_scan(std::span<const Emitter> ensemble, const ScanPlan& plan,
                                             const Setup& setup, std::uint64_t seed) {
  validate(plan);
  const double reach = scan_reach(plan.pulse);
  const double energy = std::pow(plan.pulse.area_rad / kPi, 2);
  const double bandwidth = plan.pulse.bandwidth_fwhm_hz();
  const double dark = setup.detector.dark_rate_hz * setup.pulse_period_s;
  const double fixed_cavity = 0.5 * (plan.grid_hz.front() + plan.grid_hz.back());

  std::vector<const Emitter*> sorted;
  for (const auto& e : ensemble) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->freq0_hz < b->freq0_hz; });

  std::vector<SpectrumPoint> out;
  out.reserve(plan.grid_hz.size());
  const double n = static_cast<double>(plan.shots);
  for (std::size_t k = 0; k < plan.grid_hz.size(); ++k) {
    const double f = plan.grid_hz[k];
    const double cavity = plan.co_tune_cavity ? f : fixed_cavity;
    double mean = setup.background_mean(f, bandwidth, energy) + dark;
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), f - reach,
                               [](const Emitter* e, double v) { return e->freq0_hz < v; });
    for (auto it = lo; it != sorted.end() && (*it)->freq0_hz <= f + reach; ++it)
      mean += scan_signal(**it, f, plan, setup, cavity);
    Rng rng = make_stream(seed, Stream::kShots, k);
    const auto counts = static_cast<std::uint64_t>(std::poisson_distribution<long long>(mean * n)(rng));
    const double c = static_cast<double>(counts);
    out.push_back({f, c / n, std::sqrt(std::max(c, 1.0)) / n, counts, plan.shots});
  }
  return out;
}

double detectable_fraction(const ScanPlan& plan, const Setup& setup, double threshold,
                           std::size_t radial_points, std::size_t axial_points) {
  require(radial_points > 0 && axial_points > 0, "quadrature needs points");
  // The signal depends on position only through the mode coupling, so it is
  // tabulated against coupling and the position average is done on the table.
  constexpr std::size_t kTable = 81;
  std::vector<double> signal(kTable);
  for (std::size_t i = 0; i < kTable; ++i) {
    const double c = static_cast<double>(i) / static_cast<double>(kTable - 1);
    Emitter e = make_emitter_with_purcell(0, 0.0, setup.emitter_model.p_max * c, setup.emitter_model);
    signal[i] = c > 0 ? scan_signal(e, 0.0, plan, setup, 0.0) : 0.0;
  }
  const double r_max = setup.emitter_model.mode_radius_factor * mode_waist(setup.geometry);
  double hits = 0;
  for (std::size_t i = 0; i < radial_points; ++i) {
    const double r = r_max * std::sqrt((static_cast<double>(i) + 0.5) / static_cast<double>(radial_points));
    for (std::size_t j = 0; j < axial_points; ++j) {
      const double z = setup.geometry.membrane_thickness_m * (static_cast<double>(j) + 0.5) /
                       static_cast<double>(axial_points);
      const double c = std::clamp(mode_coupling({r, z}, setup.geometry), 0.0, 1.0);
      const double x = c * static_cast<double>(kTable - 1);
      const auto k = std::min(static_cast<std::size_t>(x), kTable - 2);
      const double s = signal[k] + (signal[k + 1] - signal[k]) * (x - static_cast<double>(k));
      if (s > threshold) hits += 1;
    }
  }
  return hits / static_cast<double>(radial_points * axial_points);
}

G2Run run_g2_experiment(const Emitter& emitter, const G2Plan& plan, const Setup& setup, std::uint64_t seed) {
  require(plan.pulses > 0, "g2 experiment needs at least one pulse");
  require(plan.bandwidth_hz > 0 && plan.area_rad > 0, "g2 pulse needs positive bandwidth and area");
  require(emitter.lifetime_s > 0, "emitter lifetime must be > 0");
  const double period = setup.pulse_period_s;
  const double kappa = setup.cavity.fwhm_linewidth_hz;

  const Pulse pulse = gaussian_pulse(plan.bandwidth_hz, plan.area_rad);
  const double spread = plan.diffusion ? noise_reach(setup.noise) : 0.0;
  const double half_span = std::abs(plan.laser_offset_hz) + 3.0 * plan.bandwidth_hz + spread;
  const bool jitter = plan.jitter && setup.noise.jitter.fwhm_hz > 0;
  auto surface = excitation_surface(pulse, Relaxation::of(emitter), half_span, plan.bandwidth_hz / 40.0,
                                    jitter ? 0.3 : 1.0);

  EmitterNoise noise = plan.diffusion ? EmitterNoise(setup.noise, seed, emitter.id) : EmitterNoise();
  CavityJitterSource jit(setup.noise.jitter, make_stream(seed, Stream::kJitter, emitter.id));
  ClickBuilder builder(setup.detector, seed);
  const double eta = setup.chain_for(emitter).total();
  const double bg = setup.background_mean(emitter.freq0_hz, plan.bandwidth_hz, std::pow(plan.area_rad / kPi, 2));

  for (std::size_t k = 0; k < plan.pulses; ++k) {
    const double t = static_cast<double>(k) * period;
    if (k > 0 && plan.diffusion) noise.advance(period);
    const double det = plan.laser_offset_hz - noise.offset_hz();
    const double drive = jitter ? cavity_transmission(jit.next(period), kappa) : 1.0;
    builder.add_emission(t, (*surface)(std::sqrt(drive), det) * eta, emitter.lifetime_s);
    builder.add_poisson(t, bg * drive, setup.background.lifetime_s);
  }

  G2Run run;
  run.stream = builder.finish(static_cast<double>(plan.pulses) * period);
  for (const auto& c : run.stream.clicks) {
    switch (c.origin) {
      case ClickOrigin::kSignal: ++run.signal_clicks; break;
      case ClickOrigin::kBackground: ++run.background_clicks; break;
      case ClickOrigin::kDark: ++run.dark_clicks; break;
    }
  }
  run.clicks = run.stream.clicks.size();
  run.histogram = compute_g2(run.stream, {period, plan.max_lag, plan.norm_min_lag});
  run.raw_g2_zero = run.histogram.at(0);
  run.dark_fraction = dark_fraction(run.stream);
  run.rescaled_g2_zero = rescale_g2(run.raw_g2_zero, run.dark_fraction);
  if (plan.fit_bunching) run.bunching = fit_bunching(run.histogram);
  if (!plan.keep_stream) run.stream = ClickStream{};
  return run;
}

RabiRun run_rabi(const Emitter& emitter, const RabiPlan& plan, std::uint64_t seed) {
  RabiRun run;
  run.points = rabi_scan(emitter, plan.photon_numbers, plan.settings, seed);
  if (plan.fit) {
    std::vector<Sample> s;
    for (const auto& p : run.points) s.push_back({p.x, p.mean, std::max(p.std_err, 1e-4)});
    run.fit = fit_rabi(s, plan.settings.n_pi);
  }
  return run;
}

EchoRun run_echo(const Emitter& emitter, const EchoPlan& plan, std::uint64_t seed) {
  EchoRun run;
  run.points = echo_scan(emitter, plan.t_seq_s, plan.settings, seed);
  std::vector<Sample> s;
  for (const auto& p : run.points)
    if (p.mean > 0) s.push_back({p.x, p.mean, std::max(p.std_err, 1e-4)});
  run.fit = fit_exponential_decay(s);
  return run;
}

std::vector<double> InterrogationResult::centers(std::size_t target) const {
  std::vector<double> c;
  for (const auto& r : records)
    if (r.target == target && r.fit_ok) c.push_back(r.center_hz);
  return c;
}

CenterPairs CenterPairs::increments() const {
  CenterPairs d;
  for (std::size_t i = 1; i < interval.size(); ++i)
    if (interval[i] == interval[i - 1] + 1) {
      d.interval.push_back(interval[i]);
      d.a_hz.push_back(a_hz[i] - a_hz[i - 1]);
      d.b_hz.push_back(b_hz[i] - b_hz[i - 1]);
    }
  return d;
}

CenterPairs InterrogationResult::paired_centers(std::size_t a, std::size_t b) const {
  std::map<std::size_t, double> ca;
  for (const auto& r : records)
    if (r.target == a && r.fit_ok) ca[r.interval] = r.center_hz;
  CenterPairs p;
  for (const auto& r : records)
    if (r.target == b && r.fit_ok)
      if (auto it = ca.find(r.interval); it != ca.end()) {
        p.interval.push_back(r.interval);
        p.a_hz.push_back(it->second);
        p.b_hz.push_back(r.center_hz);
      }
  return p;
}

double InterrogationResult::center_correlation(std::size_t a, std::size_t b) const {
  const auto p = paired_centers(a, b);
  return pearson(p.a_hz, p.b_hz);
}

void validate(const InterrogationPlan& plan) {
  require(!plan.targets_hz.empty(), "interrogation needs at least one target");
  require(plan.interval_s > 0 && plan.total_s >= plan.interval_s, "need 0 < interval <= total duration");
  const double n = plan.total_s / plan.interval_s;
  require(std::abs(n - std::round(n)) < 1e-9 * n, "interval must divide the total duration");
  require(plan.probe_bandwidth_hz > 0 && plan.probe_area_rad > 0, "probe needs positive bandwidth and area");
  require(plan.grid_points >= 5, "interrogation grid needs at least 5 points");
  require(plan.half_span_hz > 0 && plan.shots_per_point > 0 && plan.shot_period_s > 0,
          "interrogation needs positive span, shots and shot period");
  require(plan.gate_s > 0, "detection gate must be > 0");
  require(plan.reacquire_factor >= 1 && plan.lost_after >= 0, "invalid lost-emitter policy");
  const double sweep = static_cast<double>(plan.grid_points * plan.shots_per_point) * plan.shot_period_s;
  require(sweep <= plan.interval_s, "one sweep does not fit into an interval");
  for (std::size_t i = 0; i < plan.targets_hz.size(); ++i)
    for (std::size_t j = i + 1; j < plan.targets_hz.size(); ++j)
      require(std::abs(plan.targets_hz[i] - plan.targets_hz[j]) > 10.0 * plan.probe_bandwidth_hz,
              "targets closer than 10 probe bandwidths cannot be interrogated separately");
}

namespace {

struct Bin {
  double counts = 0;
  double shots = 0;
};

struct TargetState {
  const Emitter* emitter = nullptr;
  EmitterNoise noise;
  double nominal = 0;
  double scan_center = 0;
  std::size_t points = 0;
  int failures = 0;
  bool lost = false;
  bool have_center = false;
  double last_center = 0;
  std::vector<double> counts;  // per grid point, current interval
  std::vector<double> shots;
  std::map<long, Bin> raw;
  std::map<long, Bin> corrected;
};

// Bins touched only by the occasional wide reacquisition scan are dropped;
// their few shots would dominate the search for the peak.
std::vector<SpectrumPoint> to_spectrum(const std::map<long, Bin>& bins, double step) {
  double most = 0;
  for (const auto& [k, b] : bins) most = std::max(most, b.shots);
  std::vector<SpectrumPoint> out;
  for (const auto& [k, b] : bins) {
    if (b.shots <= 0 || b.shots < 0.1 * most) continue;
    SpectrumPoint p;
    p.detuning_hz = static_cast<double>(k) * step;
    p.signal = b.counts / b.shots;
    p.error = std::sqrt(std::max(b.counts, 1.0)) / b.shots;
    p.counts = static_cast<std::uint64_t>(std::llround(b.counts));
    p.shots = static_cast<std::size_t>(b.shots);
    out.push_back(p);
  }
  return out;
}

std::optional<FitResult> try_fit(const std::vector<SpectrumPoint>& pts) {
  std::vector<Sample> s;
  for (const auto& p : pts) s.push_back({p.detuning_hz, p.signal, p.error});
  try {
    return fit_line(s, LineModel::kGaussian);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

InterrogationResult run_interrogation(std::span<const Emitter> ensemble, const InterrogationPlan& plan,
                                      const Setup& setup, std::uint64_t seed) {
  validate(plan);
  require(!ensemble.empty(), "interrogation needs a non-empty ensemble");
  const std::size_t nt = plan.targets_hz.size();
  const double kappa = setup.cavity.fwhm_linewidth_hz;
  const double step = 2.0 * plan.half_span_hz / static_cast<double>(plan.grid_points - 1);
  const double agg_step = 0.5 * step;
  const double shot_dt = plan.shot_period_s;
  const double collect_window = std::min(plan.gate_s, shot_dt);
  const auto widen = static_cast<std::size_t>(std::max<long>(1, std::lround(plan.reacquire_factor)));

  InterrogationResult result;
  std::vector<TargetState> st(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    const auto it = std::min_element(ensemble.begin(), ensemble.end(), [&](const Emitter& a, const Emitter& b) {
      return std::abs(a.freq0_hz - plan.targets_hz[j]) < std::abs(b.freq0_hz - plan.targets_hz[j]);
    });
    auto& s = st[j];
    s.emitter = &*it;
    if (plan.noise) s.noise = EmitterNoise(setup.noise, seed, it->id);
    // The line is acquired where the emitter sits when the run starts.
    s.nominal = it->freq0_hz + s.noise.offset_hz();
    s.scan_center = s.nominal;
    s.points = plan.grid_points;
    result.target_emitters.push_back(static_cast<std::size_t>(it - ensemble.begin()));
  }

  CavityTuner tuner(setup.tuning, kappa, st[0].emitter->freq0_hz);
  const Pulse probe = gaussian_pulse(plan.probe_bandwidth_hz, plan.probe_area_rad);
  const double table_span = std::max(0.3e6, 15.0 * plan.probe_bandwidth_hz);
  const double table_step = plan.probe_bandwidth_hz / 20.0;
  const double dark_mean = setup.detector.dark_rate_hz * collect_window;

  Rng shots_rng = make_stream(seed, Stream::kShots, 0);
  Rng dark_rng = make_stream(seed, Stream::kDark, 0);

  const auto n_intervals = static_cast<std::size_t>(std::llround(plan.total_s / plan.interval_s));
  double t = 0;
  std::size_t sweep_index = 0;
  for (std::size_t iv = 0; iv < n_intervals; ++iv) {
    const double t_end = static_cast<double>(iv + 1) * plan.interval_s;
    std::vector<double> centers_at_start;
    for (auto& s : st) {
      s.counts.assign(s.points, 0.0);
      s.shots.assign(s.points, 0.0);
      centers_at_start.push_back(s.scan_center);
    }

    while (true) {
      auto& s = st[sweep_index % nt];
      const double sweep_s = static_cast<double>(s.points * plan.shots_per_point) * shot_dt;
      if (t + sweep_s > t_end + 1e-9) break;
      ++sweep_index;
      tuner.address(s.emitter->freq0_hz);
      const double cav = tuner.resonance_hz();
      const Emitter& e = *s.emitter;
      const double p_eff = e.purcell * cavity_transmission(e.freq0_hz - cav, kappa);
      const double lifetime = purcell_lifetime(p_eff, setup.emitter_model.tau0_s);
      const double drive = cavity_transmission(e.freq0_hz - cav, kappa);
      const double eta = setup.chain_for(e, e.freq0_hz - cav).total() * -std::expm1(-collect_window / lifetime);
      Pulse p = probe;
      p.area_rad = probe.area_rad * std::sqrt(drive);
      auto profile = excitation_surface(p, Relaxation{lifetime, e.t2_s}, table_span, table_step, 1.0);
      const double bg =
          setup.background_mean(e.freq0_hz, plan.probe_bandwidth_hz, std::pow(p.area_rad / kPi, 2)) + dark_mean;
      const double lo = s.scan_center - step * static_cast<double>(s.points - 1) / 2.0;

      for (std::size_t g = 0; g < s.points; ++g) {
        const double laser = lo + step * static_cast<double>(g);
        double acc = 0;
        for (std::size_t k = 0; k < plan.shots_per_point; ++k) {
          if (plan.noise) s.noise.advance_to(t);
          const double pc = (*profile)(1.0, laser - e.freq0_hz - s.noise.offset_hz()) * eta;
          if (plan.counting_noise)
            acc += uniform01(shots_rng) < pc ? 1.0 : 0.0;
          else
            acc += pc;
          t += shot_dt;
        }
        const double nb = bg * static_cast<double>(plan.shots_per_point);
        acc += plan.counting_noise ? static_cast<double>(std::poisson_distribution<long long>(nb)(dark_rng)) : nb;
        s.counts[g] += acc;
        s.shots[g] += static_cast<double>(plan.shots_per_point);
      }
    }
    t = t_end;

    for (std::size_t j = 0; j < nt; ++j) {
      auto& s = st[j];
      IntervalRecord rec;
      rec.interval = iv;
      rec.target = j;
      rec.scan_center_hz = centers_at_start[j];
      if (plan.noise) s.noise.advance_to(t);
      rec.true_offset_hz = s.emitter->freq0_hz + s.noise.offset_hz() - s.nominal;

      const double half = step * static_cast<double>(s.points - 1) / 2.0;
      const double lo = rec.scan_center_hz - half;
      const double correction = s.have_center ? s.last_center - s.nominal : 0.0;
      std::vector<SpectrumPoint> pts;
      for (std::size_t g = 0; g < s.points; ++g) {
        if (s.shots[g] <= 0) continue;
        const double x = lo + step * static_cast<double>(g);
        pts.push_back({x, s.counts[g] / s.shots[g], std::sqrt(std::max(s.counts[g], 1.0)) / s.shots[g],
                       static_cast<std::uint64_t>(std::llround(s.counts[g])), static_cast<std::size_t>(s.shots[g])});
        auto& rb = s.raw[std::lround((x - s.nominal) / agg_step)];
        rb.counts += s.counts[g];
        rb.shots += s.shots[g];
        if (plan.feed_forward == FeedForward::kOff || s.have_center) {
          const double xc = plan.feed_forward == FeedForward::kOff ? x : x - correction;
          auto& cb = s.corrected[std::lround((xc - s.nominal) / agg_step)];
          cb.counts += s.counts[g];
          cb.shots += s.shots[g];
        }
      }
      if (pts.empty()) continue;

      const auto fit = try_fit(pts);
      bool ok = false;
      if (fit) {
        const double c = fit->value("center");
        const double w = fit->value("fwhm");
        const double a = fit->value("amplitude");
        ok = std::isfinite(c) && std::abs(c - rec.scan_center_hz) <= half && w > 0 && w < half && a > 0 &&
             a > 3.0 * fit->error("amplitude");
        if (ok) {
          rec.center_hz = c;
          rec.center_error_hz = fit->error("center");
          rec.width_hz = w;
          rec.width_error_hz = fit->error("fwhm");
        }
      }
      rec.fit_ok = ok;
      const std::size_t next_points = ok ? plan.grid_points : s.points;
      if (ok) {
        s.failures = 0;
        if (s.lost || plan.feed_forward == FeedForward::kLive) s.scan_center = rec.center_hz;
        s.lost = false;
        s.have_center = true;
        s.last_center = rec.center_hz;
      } else if (++s.failures > plan.lost_after && !s.lost) {
        s.lost = true;
        s.points = (plan.grid_points - 1) * widen + 1;
      }
      if (ok) s.points = next_points;
      rec.lost = s.lost;
      result.records.push_back(rec);
    }
  }

  for (std::size_t j = 0; j < nt; ++j) {
    AggregateLine line;
    line.target = j;
    line.raw = to_spectrum(st[j].raw, agg_step);
    line.corrected = to_spectrum(st[j].corrected, agg_step);
    line.raw_fit = try_fit(line.raw);
    line.corrected_fit = try_fit(line.corrected);
    result.aggregates.push_back(std::move(line));
  }
  result.cavity_retunes = tuner.retune_count();
  return result;
}

void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumPoint>& pts) {
  os << "detuning_hz,signal,error,counts,shots\n";
  char buf[160];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, "%.3f,%.9g,%.6g,%llu,%zu\n", p.detuning_hz, p.signal, p.error,
                  static_cast<unsigned long long>(p.counts), p.shots);
    os << buf;
  }
}

void write_scan_csv(std::ostream& os, const std::vector<ScanPoint>& pts, const char* x_name) {
  os << x_name << ",mean,stderr,shots\n";
  char buf[128];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.6g,%zu\n", p.x, p.mean, p.std_err, p.shots);
    os << buf;
  }
}

void write_intervals_csv(std::ostream& os, const std::vector<IntervalRecord>& records) {
  os << "interval,target,scan_center_hz,center_hz,center_err_hz,fwhm_hz,fwhm_err_hz,fit_ok,lost,true_offset_hz\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.3f,%.3f,%.3f,%.3f,%.3f,%d,%d,%.3f\n", r.interval, r.target,
                  r.scan_center_hz, r.center_hz, r.center_error_hz, r.width_hz, r.width_error_hz,
                  r.fit_ok ? 1 : 0, r.lost ? 1 : 0, r.true_offset_hz);
    os << buf;
  }
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateLine>& lines) {
  os << "target,kind,detuning_hz,signal,error,counts,shots\n";
  char buf[192];
  for (const auto& l : lines) {
    for (int kind = 0; kind < 2; ++kind) {
      for (const auto& p : kind == 0 ? l.raw : l.corrected) {
        std::snprintf(buf, sizeof buf, "%zu,%s,%.3f,%.9g,%.6g,%llu,%zu\n", l.target, kind == 0 ? "raw" : "corrected",
                      p.detuning_hz, p.signal, p.error, static_cast<unsigned long long>(p.counts), p.shots);
        os << buf;
      }
    }
  }
}

}  // namespace cavsim
