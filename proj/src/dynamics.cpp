#include "cavsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "cavsim/cavity.hpp"
#include "cavsim/error.hpp"
#include "cavsim/rng.hpp"

namespace cavsim {

namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// exp([omega]_x) applied to r (Rodrigues).
BlochState rotate(const BlochState& s, const Vec3& omega) {
  const double theta = std::sqrt(omega.x * omega.x + omega.y * omega.y + omega.z * omega.z);
  if (theta == 0.0) return s;
  const Vec3 k{omega.x / theta, omega.y / theta, omega.z / theta};
  const Vec3 r{s.u, s.v, s.w};
  const Vec3 kxr = cross(k, r);
  const double kdr = k.x * r.x + k.y * r.y + k.z * r.z;
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  return {r.x * c + kxr.x * sn + k.x * kdr * (1 - c), r.y * c + kxr.y * sn + k.y * kdr * (1 - c),
          r.z * c + kxr.z * sn + k.z * kdr * (1 - c)};
}

struct RelaxFactors {
  double transverse = 1.0;
  double longitudinal = 1.0;

  RelaxFactors(const Relaxation& r, double dt) {
    if (std::isfinite(r.t2_s)) transverse = std::exp(-dt / r.t2_s);
    if (std::isfinite(r.lifetime_s)) longitudinal = std::exp(-dt / r.lifetime_s);
  }

  BlochState apply(const BlochState& s) const {
    return {s.u * transverse, s.v * transverse, -1.0 + (s.w + 1.0) * longitudinal};
  }
};

void validate(const Relaxation& r) {
  require(r.lifetime_s > 0 && r.t2_s > 0, "relaxation times must be > 0");
}

// Bloch generator W(t) so that dr/dt = W x r.
Vec3 generator(const Pulse& p, double t, double static_detuning_hz) {
  const double omega = p.rabi_at(t);
  return {omega * std::cos(p.phase_rad), omega * std::sin(p.phase_rad),
          kTwoPi * (p.detuning_at(t) + static_detuning_hz)};
}

}  // namespace

double transform_limited_bandwidth(double duration_fwhm_s) {
  require(duration_fwhm_s > 0, "pulse duration must be > 0");
  return 2.0 * kLn2 / (kPi * duration_fwhm_s);
}

Pulse gaussian_pulse(double bandwidth_fwhm_hz, double area_rad, double phase_rad) {
  require(bandwidth_fwhm_hz > 0, "pulse bandwidth must be > 0");
  Pulse p;
  p.shape = PulseShape::kGaussian;
  p.duration_fwhm_s = 2.0 * kLn2 / (kPi * bandwidth_fwhm_hz);
  p.area_rad = area_rad;
  p.phase_rad = phase_rad;
  return p;
}

double Pulse::bandwidth_fwhm_hz() const {
  const double tl = transform_limited_bandwidth(duration_fwhm_s);
  return shape == PulseShape::kChirpedGaussian ? std::max(tl, chirp_span_hz) : tl;
}

double Pulse::peak_rabi_rad_s() const {
  // Field envelope exp(-2 ln2 t^2 / tau^2) integrates to tau sqrt(pi / (2 ln2))
  // times erf(3 sqrt(2 ln2)) over the truncated window, so the area is exact.
  const double a = std::sqrt(2.0 * kLn2);
  const double window = half_window_s() / duration_fwhm_s;
  return area_rad / (duration_fwhm_s * std::sqrt(kPi) / a * std::erf(window * a));
}

double Pulse::rabi_at(double t) const {
  const double x = t / duration_fwhm_s;
  return peak_rabi_rad_s() * std::exp(-2.0 * kLn2 * x * x);
}

double Pulse::detuning_at(double t) const {
  if (shape == PulseShape::kChirpedGaussian) return center_detuning_hz + chirp_span_hz * t / duration_fwhm_s;
  return center_detuning_hz;
}

double BlochState::norm() const { return std::sqrt(u * u + v * v + w * w); }

BlochState evolve_pulse(const BlochState& state, const Pulse& pulse, double static_detuning_hz,
                        const Relaxation& relax, const IntegratorOptions& opts) {
  require(pulse.duration_fwhm_s > 0, "pulse duration must be > 0");
  require(pulse.chirp_span_hz >= 0, "chirp span must be >= 0");
  require(state.norm() <= 1.0 + 1e-9, "Bloch vector outside the unit ball");
  validate(relax);

  const double half = pulse.half_window_s();
  const double window = 2.0 * half;
  double w_max = std::abs(pulse.peak_rabi_rad_s());
  const double det_edge = std::max(std::abs(pulse.detuning_at(-half) + static_detuning_hz),
                                   std::abs(pulse.detuning_at(half) + static_detuning_hz));
  w_max = std::hypot(w_max, kTwoPi * det_edge);

  const double n_envelope = 6.0 * opts.steps_per_fwhm;
  const double n_rotation = w_max * window / opts.max_rotation_per_step;
  const double n_needed = std::ceil(std::max(n_envelope, n_rotation));
  if (!(n_needed <= static_cast<double>(opts.max_steps)) || window / n_needed < 1e-15) {
    throw InvalidArgument("step-size underflow: pulse needs more than max_steps integration steps");
  }
  const auto n = static_cast<std::size_t>(n_needed);
  const double h = window / static_cast<double>(n);

  // Gauss-Legendre nodes of the fourth-order Magnus expansion.
  const double c1 = 0.5 - std::sqrt(3.0) / 6.0;
  const double c2 = 0.5 + std::sqrt(3.0) / 6.0;
  const double comm = std::sqrt(3.0) / 12.0 * h * h;
  const RelaxFactors half_relax(relax, 0.5 * h);

  BlochState s = state;
  for (std::size_t i = 0; i < n; ++i) {
    const double t0 = -half + h * static_cast<double>(i);
    const Vec3 a1 = generator(pulse, t0 + c1 * h, static_detuning_hz);
    const Vec3 a2 = generator(pulse, t0 + c2 * h, static_detuning_hz);
    const Vec3 a12 = cross(a1, a2);
    const Vec3 omega{0.5 * h * (a1.x + a2.x) - comm * a12.x, 0.5 * h * (a1.y + a2.y) - comm * a12.y,
                     0.5 * h * (a1.z + a2.z) - comm * a12.z};
    s = half_relax.apply(s);
    s = rotate(s, omega);
    s = half_relax.apply(s);
  }
  return s;
}

BlochState free_evolve(const BlochState& state, double detuning_hz, double t, const Relaxation& relax) {
  require(t >= 0, "free evolution time must be >= 0");
  validate(relax);
  const BlochState rotated = rotate(state, {0.0, 0.0, kTwoPi * detuning_hz * t});
  return RelaxFactors(relax, t).apply(rotated);
}

double excitation_probability(const Pulse& pulse, double emitter_detuning_hz, const Relaxation& relax) {
  return evolve_pulse(BlochState::ground(), pulse, emitter_detuning_hz, relax).excited_population();
}

ExcitationProfile::ExcitationProfile(const Pulse& pulse, const Relaxation& relax, double half_span_hz,
                                     std::size_t points)
    : half_span_(half_span_hz) {
  require(half_span_hz > 0 && points >= 3, "profile needs a positive span and at least 3 points");
  step_ = 2.0 * half_span_hz / static_cast<double>(points - 1);
  table_.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    table_[i] = excitation_probability(pulse, -half_span_hz + step_ * static_cast<double>(i), relax);
  }
}

double ExcitationProfile::operator()(double d) const {
  if (table_.empty()) return 0.0;
  const double x = (d + half_span_) / step_;
  if (x < 0.0 || x > static_cast<double>(table_.size() - 1)) return 0.0;
  const auto i = std::min(static_cast<std::size_t>(x), table_.size() - 2);
  const double f = x - static_cast<double>(i);
  return table_[i] * (1.0 - f) + table_[i + 1] * f;
}

double ExcitationProfile::peak() const {
  return table_.empty() ? 0.0 : *std::max_element(table_.begin(), table_.end());
}

double ExcitationProfile::fwhm_hz() const {
  if (table_.empty()) return 0.0;
  const auto imax = static_cast<std::size_t>(std::max_element(table_.begin(), table_.end()) - table_.begin());
  const double halfv = 0.5 * table_[imax];
  std::size_t l = imax;
  while (l > 0 && table_[l - 1] >= halfv) --l;
  std::size_t r = imax;
  while (r + 1 < table_.size() && table_[r + 1] >= halfv) ++r;
  auto cross_at = [&](std::size_t inside, std::size_t outside) {
    const double f = (table_[inside] - halfv) / (table_[inside] - table_[outside]);
    return static_cast<double>(inside) + f * (static_cast<double>(outside) - static_cast<double>(inside));
  };
  const double xl = l > 0 ? cross_at(l, l - 1) : 0.0;
  const double xr = r + 1 < table_.size() ? cross_at(r, r + 1) : static_cast<double>(table_.size() - 1);
  return (xr - xl) * step_;
}

double rabi_area(double photons, double n_pi) {
  require(photons >= 0, "photon number must be >= 0");
  require(n_pi > 0, "N_pi must be > 0");
  return kPi * std::sqrt(photons / n_pi);
}

namespace {

ScanPoint summarize(double x, const std::vector<double>& samples) {
  ScanPoint pt;
  pt.x = x;
  pt.shots = samples.size();
  double sum = 0;
  for (double s : samples) sum += s;
  pt.mean = sum / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double ss = 0;
    for (double s : samples) ss += (s - pt.mean) * (s - pt.mean);
    pt.std_err = std::sqrt(ss / static_cast<double>(samples.size() - 1) / static_cast<double>(samples.size()));
  }
  return pt;
}

double jitter_area_scale(const CavityJitter& jitter, double linewidth_hz, Rng& rng) {
  const double dc = cavity_detuning_sample(jitter, rng);
  return std::sqrt(cavity_transmission(dc, linewidth_hz));
}

}  // namespace

std::vector<ScanPoint> rabi_scan(const Emitter& emitter, std::span<const double> photon_numbers,
                                 const RabiSettings& s, std::uint64_t seed) {
  require(s.shots >= 1, "need at least one shot per point");
  const Relaxation relax = s.decay ? Relaxation::of(emitter) : Relaxation::none();
  std::vector<ScanPoint> out;
  out.reserve(photon_numbers.size());
  std::vector<double> samples(s.shots);
  for (std::size_t k = 0; k < photon_numbers.size(); ++k) {
    const double n = photon_numbers[k];
    const double area = rabi_area(n, s.n_pi);
    Rng rng = make_stream(seed, Stream::kShots, k);
    for (std::size_t shot = 0; shot < s.shots; ++shot) {
      const double scale = jitter_area_scale(s.jitter, s.cavity_linewidth_hz, rng);
      const double det = s.emitter_sigma_hz > 0 ? s.emitter_sigma_hz * standard_normal(rng) : 0.0;
      Pulse p;
      p.duration_fwhm_s = s.pulse_duration_s;
      p.area_rad = area * scale;
      const double pe = area == 0.0 ? 0.0 : excitation_probability(p, det, relax);
      samples[shot] = pe + s.background_per_photon * n;
    }
    out.push_back(summarize(n, samples));
  }
  return out;
}

double echo_excited_population(const EchoSequence& seq, double duration_s, double detuning_hz,
                               double area_scale, const Relaxation& pulse_relax,
                               const Relaxation& free_relax, double stretch, double pulse_detuning_hz) {
  require(seq.t_seq_s >= 0, "echo sequence time must be >= 0");
  require(stretch > 0, "stretch exponent must be > 0");
  Pulse p;
  p.duration_fwhm_s = duration_s;

  // Non-exponential decay is imposed as a factor on the transverse components;
  // the free precession then only carries population decay.
  const bool stretched = stretch != 1.0 && std::isfinite(free_relax.t2_s);
  const Relaxation free_part = stretched ? Relaxation{free_relax.lifetime_s, std::numeric_limits<double>::infinity()}
                                         : free_relax;
  auto coherence = [&](double t) { return std::exp(-std::pow(t / free_relax.t2_s, stretch)); };
  const double half_t = 0.5 * seq.t_seq_s;

  p.area_rad = 0.5 * kPi * area_scale;
  p.phase_rad = seq.phases[0];
  BlochState s = evolve_pulse(BlochState::ground(), p, pulse_detuning_hz, pulse_relax);
  s = free_evolve(s, detuning_hz, half_t, free_part);
  if (stretched) {
    const double f = coherence(half_t);
    s.u *= f;
    s.v *= f;
  }
  p.area_rad = kPi * area_scale;
  p.phase_rad = seq.phases[1];
  s = evolve_pulse(s, p, pulse_detuning_hz, pulse_relax);
  s = free_evolve(s, detuning_hz, half_t, free_part);
  if (stretched && half_t > 0) {
    const double f = coherence(seq.t_seq_s) / coherence(half_t);
    s.u *= f;
    s.v *= f;
  }
  p.area_rad = 0.5 * kPi * area_scale;
  p.phase_rad = seq.phases[2];
  s = evolve_pulse(s, p, pulse_detuning_hz, pulse_relax);
  return s.excited_population();
}

namespace {

// Population difference (inverted minus unchanged first-pulse phase) for
// instantaneous ideal pulses at zero detuning.
double ideal_echo_difference(const std::array<double, 3>& phases) {
  auto pulse = [](const BlochState& s, double area, double phase) {
    return rotate(s, {area * std::cos(phase), area * std::sin(phase), 0.0});
  };
  auto run = [&](double phi1) {
    BlochState s = pulse(BlochState::ground(), 0.5 * kPi, phi1);
    s = pulse(s, kPi, phases[1]);
    s = pulse(s, 0.5 * kPi, phases[2]);
    return s.excited_population();
  };
  return run(phases[0] + kPi) - run(phases[0]);
}

}  // namespace

EchoResult echo_contrast(const Emitter& emitter, const EchoSequence& seq, const EchoSettings& s,
                         std::uint64_t seed) {
  require(s.shots >= 1, "need at least one shot");
  require(s.detection_efficiency >= 0 && s.detection_efficiency <= 1, "detection efficiency must lie in [0, 1]");
  const double ideal = ideal_echo_difference(seq.phases);
  if (std::abs(ideal) < 1e-6) throw InvalidArgument("echo phases give no contrast even for ideal pulses");

  const Relaxation relax = s.decay ? Relaxation::of(emitter) : Relaxation::none();
  EchoSequence inverted = seq;
  inverted.phases[0] += kPi;

  Rng rng = make_stream(seed, Stream::kShots, 0);
  std::vector<double> diffs(s.shots);
  double sum_same = 0, sum_inv = 0;
  std::uint64_t counts_same = 0, counts_inv = 0;
  auto populations = [&](double scale, double det) {
    const double pd = s.detuned_pulses ? det : 0.0;
    return std::pair{echo_excited_population(seq, s.pulse_duration_s, det, scale, relax, relax, s.stretch, pd),
                     echo_excited_population(inverted, s.pulse_duration_s, det, scale, relax, relax, s.stretch, pd)};
  };
  if (s.jitter.fwhm_hz == 0.0 && s.emitter_sigma_hz == 0.0) {
    // Every shot is identical; only the counting differs.
    const auto [pa, pb] = populations(1.0, s.static_detuning_hz);
    sum_same = pa * static_cast<double>(s.shots);
    sum_inv = pb * static_cast<double>(s.shots);
    std::fill(diffs.begin(), diffs.end(), (pb - pa) / ideal);
    if (s.detection_efficiency > 0) {
      counts_same = std::binomial_distribution<std::uint64_t>(s.shots, s.detection_efficiency * pa)(rng);
      counts_inv = std::binomial_distribution<std::uint64_t>(s.shots, s.detection_efficiency * pb)(rng);
    }
  } else {
    for (std::size_t shot = 0; shot < s.shots; ++shot) {
      const double scale = jitter_area_scale(s.jitter, s.cavity_linewidth_hz, rng);
      const double det = s.static_detuning_hz + (s.emitter_sigma_hz > 0 ? s.emitter_sigma_hz * standard_normal(rng) : 0.0);
      const auto [pa, pb] = populations(scale, det);
      sum_same += pa;
      sum_inv += pb;
      diffs[shot] = (pb - pa) / ideal;
      if (s.detection_efficiency > 0) {
        counts_same += uniform01(rng) < s.detection_efficiency * pa ? 1 : 0;
        counts_inv += uniform01(rng) < s.detection_efficiency * pb ? 1 : 0;
      }
    }
  }
  EchoResult r;
  const double n = static_cast<double>(s.shots);
  r.excited_same = sum_same / n;
  r.excited_inverted = sum_inv / n;
  if (s.detection_efficiency > 0) {
    const double scale = n * s.detection_efficiency * ideal;
    r.contrast = (static_cast<double>(counts_inv) - static_cast<double>(counts_same)) / scale;
    r.std_err = std::sqrt(static_cast<double>(counts_inv + counts_same)) / std::abs(scale);
  } else {
    const ScanPoint pt = summarize(0.0, diffs);
    r.contrast = pt.mean;
    r.std_err = pt.std_err;
  }
  return r;
}

std::vector<ScanPoint> echo_scan(const Emitter& emitter, std::span<const double> t_values,
                                 const EchoSettings& settings, std::uint64_t seed) {
  std::vector<ScanPoint> out;
  out.reserve(t_values.size());
  for (std::size_t k = 0; k < t_values.size(); ++k) {
    EchoSequence seq;
    seq.t_seq_s = t_values[k];
    const EchoResult r = echo_contrast(emitter, seq, settings, splitmix64(seed ^ (k + 1)));
    out.push_back({t_values[k], r.contrast, r.std_err, settings.shots});
  }
  return out;
}

}  // namespace cavsim
