#include "cavsim/detection.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "cavsim/error.hpp"

namespace cavsim {

double EfficiencyChain::total() const { return eta_channel * eta_out * eta_fiber * eta_rest; }

double total_efficiency(const EfficiencyChain& c) {
  for (double f : {c.eta_channel, c.eta_out, c.eta_fiber, c.eta_rest})
    require(f >= 0 && f <= 1, "efficiency factors must lie in [0, 1]");
  return c.total();
}

const char* origin_name(ClickOrigin o) {
  switch (o) {
    case ClickOrigin::kSignal: return "signal";
    case ClickOrigin::kBackground: return "background";
    case ClickOrigin::kDark: return "dark";
  }
  return "unknown";
}

ClickBuilder::ClickBuilder(const DetectorSettings& settings, std::uint64_t seed)
    : settings_(settings),
      rng_(make_stream(seed, Stream::kDetection)),
      dark_rng_(make_stream(seed, Stream::kDark)) {
  require(settings.dark_rate_hz >= 0, "dark rate must be >= 0");
  require(settings.dead_time_s >= 0, "dead time must be >= 0");
}

void ClickBuilder::push(double t_s, ClickOrigin origin) {
  clicks_.push_back({static_cast<std::int64_t>(std::floor(t_s * 1e9)), origin});
}

void ClickBuilder::add_emission(double t, double p_click, double lifetime, ClickOrigin origin) {
  if (p_click <= 0) return;
  if (uniform01(rng_) >= p_click) return;
  const double delay = lifetime > 0 ? std::exponential_distribution<double>(1.0 / lifetime)(rng_) : 0.0;
  push(t + delay, origin);
}

void ClickBuilder::add_poisson(double t, double mean, double lifetime, ClickOrigin origin) {
  if (mean <= 0) return;
  const auto k = std::poisson_distribution<int>(mean)(rng_);
  for (int i = 0; i < k; ++i) {
    const double delay = lifetime > 0 ? std::exponential_distribution<double>(1.0 / lifetime)(rng_) : 0.0;
    push(t + delay, origin);
  }
}

ClickStream ClickBuilder::finish(double duration_s) {
  require(duration_s > 0, "stream duration must be > 0");
  ClickStream out;
  out.duration_ns = static_cast<std::int64_t>(std::llround(duration_s * 1e9));
  out.dark_rate_hz = settings_.dark_rate_hz;

  if (settings_.dark_rate_hz > 0) {
    std::exponential_distribution<double> gap(settings_.dark_rate_hz);
    for (double t = gap(dark_rng_); t < duration_s; t += gap(dark_rng_)) push(t, ClickOrigin::kDark);
  }
  std::erase_if(clicks_, [&](const Click& c) { return c.t_ns < 0 || c.t_ns > out.duration_ns; });
  std::stable_sort(clicks_.begin(), clicks_.end(),
                   [](const Click& a, const Click& b) { return a.t_ns < b.t_ns; });

  // A click blocks the detector for the dead time; at least one tick.
  const auto dead_ns = std::max<std::int64_t>(1, std::llround(settings_.dead_time_s * 1e9));
  out.clicks.reserve(clicks_.size());
  std::int64_t last = 0;
  bool have_last = false;
  for (const Click& c : clicks_) {
    if (have_last && c.t_ns - last < dead_ns) continue;
    out.clicks.push_back(c);
    last = c.t_ns;
    have_last = true;
  }
  clicks_.clear();
  clicks_.shrink_to_fit();
  return out;
}

ClickStream emit_clicks(std::span<const Excitation> excitations, const EfficiencyChain& chain,
                        double dark_rate_hz, double duration_s, std::uint64_t seed, double dead_time_s) {
  const double eta = total_efficiency(chain);
  for (std::size_t i = 1; i < excitations.size(); ++i)
    require(excitations[i].time_s >= excitations[i - 1].time_s, "excitation times must be sorted");
  ClickBuilder builder({dark_rate_hz, dead_time_s}, seed);
  for (const Excitation& e : excitations) {
    require(e.p_excited >= 0 && e.p_excited <= 1, "excitation probability must lie in [0, 1]");
    builder.add_emission(e.time_s, e.p_excited * eta, e.lifetime_s, ClickOrigin::kSignal);
  }
  return builder.finish(duration_s);
}

void write_clicks_csv(std::ostream& os, const ClickStream& s, bool with_origin) {
  os << (with_origin ? "timestamp_ns,origin\n" : "timestamp_ns\n");
  for (const Click& c : s.clicks) {
    os << c.t_ns;
    if (with_origin) os << ',' << origin_name(c.origin);
    os << '\n';
  }
}

ClickStream read_clicks_csv(std::istream& is, double dark_rate_hz) {
  ClickStream s;
  s.dark_rate_hz = dark_rate_hz;
  std::string line;
  if (!std::getline(is, line) || line.rfind("timestamp_ns", 0) != 0)
    throw InvalidArgument("click CSV must start with a timestamp_ns header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    Click c;
    c.t_ns = std::stoll(line.substr(0, comma));
    if (comma != std::string::npos) {
      const std::string o = line.substr(comma + 1);
      c.origin = o == "dark" ? ClickOrigin::kDark : o == "background" ? ClickOrigin::kBackground : ClickOrigin::kSignal;
    }
    s.clicks.push_back(c);
  }
  s.duration_ns = s.clicks.empty() ? 0 : s.clicks.back().t_ns + 1;
  return s;
}

}  // namespace cavsim
