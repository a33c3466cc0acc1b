#include "cavsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <ostream>

#include "cavsim/constants.hpp"
#include "cavsim/error.hpp"
#include "lm.hpp"

namespace cavsim {

using detail::levenberg_marquardt;
using Eigen::VectorXd;

double G2Histogram::at(int lag) const {
  for (std::size_t i = 0; i < lags.size(); ++i)
    if (lags[i] == lag) return values[i];
  throw InvalidArgument("lag not present in histogram");
}

G2Histogram compute_g2(const ClickStream& stream, const G2Options& o) {
  require(o.period_s > 0, "pulse period must be > 0");
  require(o.max_lag >= 1 && o.norm_min_lag >= 1 && o.norm_min_lag <= o.max_lag,
          "need 1 <= norm_min_lag <= max_lag");
  if (stream.clicks.size() < 2) throw InsufficientData("too few clicks for a correlation estimate: need at least 2");

  // Occupied pulse windows with their click counts, in time order.
  const double period_ns = o.period_s * 1e9;
  std::vector<std::int64_t> idx;
  std::vector<double> cnt;
  for (const Click& c : stream.clicks) {
    const auto k = static_cast<std::int64_t>(std::floor(static_cast<double>(c.t_ns) / period_ns));
    if (!idx.empty() && idx.back() == k) {
      cnt.back() += 1;
    } else {
      idx.push_back(k);
      cnt.push_back(1);
    }
  }
  const auto pulses = static_cast<double>(idx.back() - idx.front() + 1);
  if (pulses <= 2.0 * o.max_lag)
    throw InsufficientData("stream spans too few pulse periods for the requested max_lag");

  std::vector<double> coinc(static_cast<std::size_t>(o.max_lag) + 1, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    coinc[0] += cnt[i] * (cnt[i] - 1);
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      const auto d = idx[j] - idx[i];
      if (d > o.max_lag) break;
      coinc[static_cast<std::size_t>(d)] += cnt[i] * cnt[j];
    }
  }

  // Pairs of windows available at lag k.
  auto pairs = [&](int k) { return k == 0 ? pulses : pulses - k; };
  double norm_sum = 0, raw_sum = 0;
  for (int k = o.norm_min_lag; k <= o.max_lag; ++k) {
    norm_sum += coinc[static_cast<std::size_t>(k)] / pairs(k);
    raw_sum += coinc[static_cast<std::size_t>(k)];
  }
  const double n_norm = o.max_lag - o.norm_min_lag + 1;
  if (raw_sum / n_norm < o.min_norm_coincidences) {
    throw InsufficientData("too few clicks for g2 normalization: need at least " +
                           std::to_string(o.min_norm_coincidences) + " coincidences per long lag, got " +
                           std::to_string(raw_sum / n_norm));
  }

  G2Histogram h;
  h.normalization = norm_sum / n_norm;
  h.period_s = o.period_s;
  h.clicks = stream.clicks.size();
  h.pulses = static_cast<std::size_t>(pulses);
  for (int k = 0; k <= o.max_lag; ++k) {
    const double c = coinc[static_cast<std::size_t>(k)];
    h.lags.push_back(k);
    h.coincidences.push_back(c);
    h.values.push_back(c / pairs(k) / h.normalization);
    h.errors.push_back(std::sqrt(std::max(c, 1.0)) / pairs(k) / h.normalization);
  }
  return h;
}

double dark_fraction(const ClickStream& s) {
  if (s.clicks.empty()) throw InsufficientData("no clicks");
  return std::min(1.0, s.dark_rate_hz * s.duration_s() / static_cast<double>(s.clicks.size()));
}

double rescale_g2(double raw, double r) {
  if (!(r >= 0 && r < 1)) throw InvalidArgument("background fraction must lie in [0, 1)");
  const double s = 1.0 - r;
  return (raw - 2.0 * r * s - r * r) / (s * s);
}

double background_fraction_for(double raw, double corrected) {
  require(raw < 1.0 && corrected < raw, "inversion needs corrected < raw < 1");
  // (1 - r)^2 = (1 - raw) / (1 - corrected)
  return 1.0 - std::sqrt((1.0 - raw) / (1.0 - corrected));
}

const char* model_name(FitModel m) {
  switch (m) {
    case FitModel::kGaussian: return "gaussian";
    case FitModel::kLorentzian: return "lorentzian";
    case FitModel::kExponential: return "exponential";
    case FitModel::kExpBunching: return "exp-bunching";
    case FitModel::kRabiDamped: return "rabi-damped";
  }
  return "unknown";
}

const FitParam& FitResult::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw InvalidArgument("fit result has no parameter '" + name + "'");
}

std::string FitResult::to_json() const {
  nlohmann::json params_json = nlohmann::json::object();
  for (const auto& p : params) {
    nlohmann::json err = std::isfinite(p.error) ? nlohmann::json(p.error) : nlohmann::json(nullptr);
    params_json[p.name] = {{"value", p.value}, {"error", err}};
  }
  nlohmann::json j{{"model", model_name(model)},
                   {"params", params_json},
                   {"reduced_chi2", reduced_chi2},
                   {"iterations", iterations},
                   {"points", points}};
  return j.dump(2);
}

FitResult fit_result_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FitResult r;
  const std::string m = j.at("model").get<std::string>();
  for (FitModel fm : {FitModel::kGaussian, FitModel::kLorentzian, FitModel::kExponential,
                      FitModel::kExpBunching, FitModel::kRabiDamped})
    if (m == model_name(fm)) r.model = fm;
  for (const auto& [name, v] : j.at("params").items()) {
    const auto& e = v.at("error");
    r.params.push_back({name, v.at("value").get<double>(), e.is_null() ? INFINITY : e.get<double>()});
  }
  r.reduced_chi2 = j.at("reduced_chi2").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.points = j.at("points").get<std::size_t>();
  return r;
}

namespace {

FitResult package(FitModel model, const std::vector<std::string>& names, const detail::LmOutcome& lm,
                  std::size_t points) {
  FitResult r;
  r.model = model;
  r.iterations = lm.iterations;
  r.points = points;
  const double dof = static_cast<double>(points) - static_cast<double>(names.size());
  r.reduced_chi2 = dof > 0 ? lm.chi2 / dof : 0.0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double var = lm.covariance(ii, ii);
    r.params.push_back({names[i], lm.params[ii], var >= 0 ? std::sqrt(var) : INFINITY});
  }
  return r;
}

double gaussian_shape(double dx, double w) { return std::exp(-4.0 * kLn2 * dx * dx / (w * w)); }

}  // namespace

FitResult fit_bunching(const G2Histogram& g2) {
  std::vector<Sample> data;
  for (std::size_t i = 0; i < g2.lags.size(); ++i) {
    if (g2.lags[i] < 1) continue;
    data.push_back({g2.lags[i] * g2.period_s, g2.values[i], g2.errors[i]});
  }
  if (data.size() < 4) throw InsufficientData("bunching fit needs at least 4 nonzero lags");

  // Amplitude from the first few lags; decay constant from the 1/e crossing.
  const std::size_t head = std::min<std::size_t>(5, data.size());
  double a0 = 0;
  for (std::size_t i = 0; i < head; ++i) a0 += data[i].y - 1.0;
  a0 /= static_cast<double>(head);
  double tau0 = 0.1 * data.back().x;
  if (a0 > 0) {
    for (const Sample& s : data) {
      if (s.y - 1.0 < a0 / std::exp(1.0)) {
        tau0 = std::max(s.x, data.front().x);
        break;
      }
    }
  }
  const detail::ModelFn model = [](double t, const VectorXd& p, Eigen::Ref<VectorXd> g) {
    const double e = std::exp(-t / p[1]);
    g[0] = e;
    g[1] = p[0] * e * t / (p[1] * p[1]);
    return 1.0 + p[0] * e;
  };
  VectorXd init(2);
  init << a0, tau0;
  const auto lm = levenberg_marquardt(data, model, init);
  FitResult r = package(FitModel::kExpBunching, {"amplitude", "tau_d"}, lm, data.size());
  if (r.params[1].value < 0) {
    // Symmetric in a flat histogram; a negative decay constant is a growing term.
    if (std::abs(r.params[0].value) > 3.0 * r.params[0].error)
      throw FitError("bunching fit converged to a growing exponential");
    r.params[1].value = std::abs(r.params[1].value);
  }
  return r;
}

FitResult fit_line(std::span<const Sample> scan, LineModel model) {
  if (scan.size() < 5) throw InvalidArgument("line fit needs at least 5 points");
  std::vector<Sample> pts(scan.begin(), scan.end());
  std::stable_sort(pts.begin(), pts.end(), [](const Sample& a, const Sample& b) { return a.x < b.x; });

  // Initial guesses come from a 3-point running mean so that a single noisy
  // sample does not masquerade as the peak.
  std::vector<double> sm(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = std::min(i + 1, pts.size() - 1);
    double acc = 0;
    for (std::size_t k = a; k <= b; ++k) acc += pts[k].y;
    sm[i] = acc / static_cast<double>(b - a + 1);
  }
  const auto imax = static_cast<std::size_t>(std::max_element(sm.begin(), sm.end()) - sm.begin());
  std::vector<double> ys;
  for (const auto& s : pts) ys.push_back(s.y);
  std::sort(ys.begin(), ys.end());
  const double ymax = ys.back();
  const double ymin = ys.front();
  const double scale = std::max(std::abs(ymax), std::abs(ymin));
  if (!(ymax - ymin > 1e-12 * scale) || scale == 0.0) throw InvalidArgument("degenerate line data: flat scan");
  std::vector<double> sms = sm;
  std::sort(sms.begin(), sms.end());
  const double base0 = sms[sms.size() / 5];
  const double peak0 = std::max(sm[imax], pts[imax].y);
  const double half = base0 + 0.5 * (sm[imax] - base0);

  // Half-maximum crossings around the maximum.
  auto crossing = [&](int dir) -> double {
    std::size_t i = imax;
    while (true) {
      const std::size_t j = dir < 0 ? i - 1 : i + 1;
      if ((dir < 0 && i == 0) || (dir > 0 && i + 1 == pts.size())) return NAN;
      if (sm[j] < half) {
        const double f = (sm[i] - half) / (sm[i] - sm[j]);
        return pts[i].x + f * (pts[j].x - pts[i].x);
      }
      i = j;
    }
  };
  const double xl = crossing(-1), xr = crossing(+1);
  const double x_ref = pts[imax].x;
  double fwhm0;
  if (std::isfinite(xl) && std::isfinite(xr)) fwhm0 = xr - xl;
  else if (std::isfinite(xl)) fwhm0 = 2.0 * (x_ref - xl);
  else if (std::isfinite(xr)) fwhm0 = 2.0 * (xr - x_ref);
  else fwhm0 = 0.5 * (pts.back().x - pts.front().x);
  if (!(fwhm0 > 0)) fwhm0 = 0.5 * (pts.back().x - pts.front().x);

  // Window around the global maximum; keep at least 5 points.
  const double reach = 3.0 * fwhm0;
  std::vector<Sample> win;
  for (const auto& s : pts)
    if (std::abs(s.x - x_ref) <= reach) win.push_back({s.x - x_ref, s.y, s.sigma});
  if (win.size() < 5) {
    std::vector<Sample> by_dist(pts.begin(), pts.end());
    std::stable_sort(by_dist.begin(), by_dist.end(), [&](const Sample& a, const Sample& b) {
      return std::abs(a.x - x_ref) < std::abs(b.x - x_ref);
    });
    win.clear();
    for (std::size_t i = 0; i < 5; ++i) win.push_back({by_dist[i].x - x_ref, by_dist[i].y, by_dist[i].sigma});
  }

  // Weighted first moment for the center.
  double sw = 0, swx = 0;
  for (const auto& s : win) {
    const double wgt = std::max(s.y - base0, 0.0);
    sw += wgt;
    swx += wgt * s.x;
  }
  const double c0 = sw > 0 ? swx / sw : 0.0;

  detail::ModelFn fn;
  if (model == LineModel::kGaussian) {
    fn = [](double x, const VectorXd& p, Eigen::Ref<VectorXd> g) {
      const double dx = x - p[0];
      const double e = gaussian_shape(dx, p[1]);
      const double k = 8.0 * kLn2 * p[2] * e / (p[1] * p[1]);
      g[0] = k * dx;
      g[1] = k * dx * dx / p[1];
      g[2] = e;
      g[3] = 1.0;
      return p[2] * e + p[3];
    };
  } else {
    fn = [](double x, const VectorXd& p, Eigen::Ref<VectorXd> g) {
      const double dx = x - p[0];
      const double l = 1.0 / (1.0 + 4.0 * dx * dx / (p[1] * p[1]));
      const double k = 8.0 * p[2] * l * l / (p[1] * p[1]);
      g[0] = k * dx;
      g[1] = k * dx * dx / p[1];
      g[2] = l;
      g[3] = 1.0;
      return p[2] * l + p[3];
    };
  }
  VectorXd init(4);
  init << c0, fwhm0, peak0 - base0, base0;
  const auto lm = levenberg_marquardt(win, fn, init);
  FitResult r = package(model == LineModel::kGaussian ? FitModel::kGaussian : FitModel::kLorentzian,
                        {"center", "fwhm", "amplitude", "offset"}, lm, win.size());
  r.params[0].value += x_ref;
  r.params[1].value = std::abs(r.params[1].value);
  return r;
}

FitResult fit_exponential_decay(std::span<const Sample> points) {
  if (points.size() < 4) throw InvalidArgument("exponential fit needs at least 4 points");
  for (const auto& s : points)
    if (!(s.y > 0)) throw InvalidArgument("exponential fit needs positive ordinates");

  // Log-linear least squares with weights (y / sigma)^2.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& s : points) {
    const double w = (s.y / s.sigma) * (s.y / s.sigma);
    const double ly = std::log(s.y);
    sw += w;
    sx += w * s.x;
    sy += w * ly;
    sxx += w * s.x * s.x;
    sxy += w * s.x * ly;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0)) throw InvalidArgument("exponential fit needs at least two distinct abscissae");
  const double slope = (sw * sxy - sx * sy) / det;
  const double icpt = (sy - slope * sx) / sw;
  double span = 0;
  for (const auto& s : points) span = std::max(span, std::abs(s.x - points[0].x));
  if (!(slope < -1e-6 / span))
    throw FitError("decay constant not identifiable: data show no decay (tau -> infinity)");

  const detail::ModelFn fn = [](double t, const VectorXd& p, Eigen::Ref<VectorXd> g) {
    const double e = std::exp(-t / p[1]);
    g[0] = e;
    g[1] = p[0] * e * t / (p[1] * p[1]);
    return p[0] * e;
  };
  VectorXd init(2);
  init << std::exp(icpt), -1.0 / slope;
  const auto lm = levenberg_marquardt(points, fn, init);
  FitResult r = package(FitModel::kExponential, {"amplitude", "tau"}, lm, points.size());
  if (!(r.params[1].value > 0) || r.params[1].value > 1e6 * span)
    throw FitError("decay constant not identifiable: fitted tau is non-positive or unbounded");
  return r;
}

double rabi_model(double n, double amplitude, double damping, double n_pi, double slope, double offset) {
  const double theta = kPi * std::sqrt(std::max(n, 0.0) / n_pi);
  return 0.5 * amplitude * (1.0 - std::exp(-damping * theta) * std::cos(theta)) + slope * n + offset;
}

FitResult fit_rabi(std::span<const Sample> points, double n_pi_guess) {
  if (points.size() < 8) throw InvalidArgument("Rabi fit needs at least 8 points");
  require(n_pi_guess > 0, "N_pi guess must be > 0");
  const detail::ModelFn fn = [](double n, const VectorXd& p, Eigen::Ref<VectorXd> g) {
    const double nn = std::max(n, 0.0);
    const double theta = kPi * std::sqrt(nn / p[2]);
    const double d = std::exp(-p[1] * theta);
    const double c = std::cos(theta), s = std::sin(theta);
    g[0] = 0.5 * (1.0 - d * c);
    g[1] = 0.5 * p[0] * c * d * theta;
    const double dfdtheta = 0.5 * p[0] * d * (p[1] * c + s);
    g[2] = dfdtheta * (-0.5 * theta / p[2]);
    g[3] = nn;
    g[4] = 1.0;
    return 0.5 * p[0] * (1.0 - d * c) + p[3] * nn + p[4];
  };
  double ymax = points[0].y, ymin = points[0].y;
  for (const auto& s : points) {
    ymax = std::max(ymax, s.y);
    ymin = std::min(ymin, s.y);
  }
  VectorXd init(5);
  init << ymax - ymin, 0.05, n_pi_guess, 0.0, ymin;
  const auto lm = levenberg_marquardt(points, fn, init);
  return package(FitModel::kRabiDamped, {"amplitude", "damping", "n_pi", "slope", "offset"}, lm, points.size());
}

std::vector<std::size_t> find_peaks(std::span<const double> y, double threshold, std::size_t min_sep) {
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] <= threshold) continue;
    const bool left = i == 0 || y[i] >= y[i - 1];
    const bool right = i + 1 == y.size() || y[i] > y[i + 1];
    if (left && right) cand.push_back(i);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : cand) {
    bool ok = true;
    for (std::size_t k : kept)
      if ((c > k ? c - k : k - c) < min_sep) ok = false;
    if (ok) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<double> running_median(std::span<const double> y, std::size_t half_window) {
  std::vector<double> out(y.size());
  std::vector<double> buf;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t lo = i > half_window ? i - half_window : 0;
    const std::size_t hi = std::min(y.size(), i + half_window + 1);
    buf.assign(y.begin() + static_cast<long>(lo), y.begin() + static_cast<long>(hi));
    const auto mid = buf.begin() + static_cast<long>(buf.size() / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    out[i] = *mid;
  }
  return out;
}

double deconvolve_quadrature(double width, double probe) {
  return width > probe ? std::sqrt(width * width - probe * probe) : 0.0;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, "correlation needs two equal-length series");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

void write_g2_csv(std::ostream& os, const G2Histogram& g2) {
  os << "lag,tau_s,g2,error,coincidences\n";
  char buf[160];
  for (std::size_t i = 0; i < g2.lags.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.0f\n", g2.lags[i], g2.lags[i] * g2.period_s,
                  g2.values[i], g2.errors[i], g2.coincidences[i]);
    os << buf;
  }
}

}  // namespace cavsim
