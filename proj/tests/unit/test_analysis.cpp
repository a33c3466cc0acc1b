#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cavsim/analysis.hpp"
#include "cavsim/constants.hpp"
#include "cavsim/error.hpp"
#include "stats.hpp"

using namespace cavsim;

namespace {

ClickStream poisson_stream(double mean_per_pulse, std::size_t pulses, std::uint64_t seed) {
  ClickBuilder b({0.0, 0.0}, seed);
  for (std::size_t k = 0; k < pulses; ++k) b.add_poisson(k * 1e-3 + 1e-6, mean_per_pulse, 1e-5);
  return b.finish(static_cast<double>(pulses) * 1e-3);
}

std::vector<Sample> gaussian_line(double c, double w, double a, double o, double lo, double hi, int n) {
  std::vector<Sample> s;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * i / (n - 1);
    s.push_back({x, a * std::exp(-4 * kLn2 * (x - c) * (x - c) / (w * w)) + o, 1.0});
  }
  return s;
}

}  // namespace

TEST_CASE("g2 of Poissonian light is flat") {
  const ClickStream s = poisson_stream(0.05, 200000, 1);
  const G2Histogram h = compute_g2(s, {});
  CHECK(h.at(0) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::abs(h.at(0) - 1.0) < 4 * h.errors[0]);
  CHECK(h.at(1) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(h.pulses >= 199000);
  CHECK(h.clicks == s.clicks.size());
}

TEST_CASE("g2 of an ideal single emitter vanishes at zero lag") {
  ClickBuilder b({0.0, 0.0}, 2);
  for (std::size_t k = 0; k < 200000; ++k) b.add_emission(k * 1e-3, 0.05, 0.152e-3);
  const G2Histogram h = compute_g2(b.finish(200.0), {});
  CHECK(h.at(0) < 0.05);
  CHECK(h.at(5) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("g2 reports insufficient data") {
  ClickStream tiny;
  tiny.clicks = {{10, ClickOrigin::kSignal}};
  CHECK_THROWS_AS(compute_g2(tiny, {}), InsufficientData);
  CHECK_THROWS_AS(compute_g2(poisson_stream(0.001, 3000, 3), {}), InsufficientData);
  CHECK_THROWS_AS(compute_g2(poisson_stream(0.05, 3000, 3), {1e-3, 10, 20, 10}), InvalidArgument);
}

TEST_CASE("g2 is invariant under time translation") {
  ClickStream s = poisson_stream(0.05, 50000, 4);
  const G2Histogram a = compute_g2(s, {1e-3, 200, 100, 10});
  for (auto& c : s.clicks) c.t_ns += 7'000'000;
  const G2Histogram b = compute_g2(s, {1e-3, 200, 100, 10});
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]));
}

TEST_CASE("background rescaling") {
  CHECK(rescale_g2(0.73, 0.242) == doctest::Approx(0.53).epsilon(0.01));
  CHECK(background_fraction_for(0.73, 0.53) == doctest::Approx(0.2420).epsilon(1e-3));
  CHECK(rescale_g2(1.0, 0.3) == doctest::Approx(1.0));
  CHECK(rescale_g2(0.4, 0.0) == 0.4);
  for (double r : {0.05, 0.2, 0.5})
    CHECK(background_fraction_for(0.8, rescale_g2(0.8, r)) == doctest::Approx(r).epsilon(1e-9));
  CHECK_THROWS_AS(rescale_g2(0.7, 1.0), InvalidArgument);
  CHECK_THROWS_AS(rescale_g2(0.7, -0.1), InvalidArgument);
}

TEST_CASE("dark fraction") {
  ClickBuilder b({100.0, 0.0}, 5);
  for (int i = 0; i < 1000; ++i) b.add_emission(i * 1e-2, 1.0, 0.0);
  const ClickStream s = b.finish(10.0);
  CHECK(dark_fraction(s) == doctest::Approx(1000.0 / s.clicks.size()).epsilon(1e-9));
  CHECK_THROWS_AS(dark_fraction(ClickStream{}), InsufficientData);
}

TEST_CASE("line fits recover noiseless parameters") {
  const auto g = gaussian_line(0.03e6, 0.15e6, 2.0, 0.1, -0.4e6, 0.4e6, 41);
  const FitResult r = fit_line(g, LineModel::kGaussian);
  CHECK(r.value("center") == doctest::Approx(0.03e6).epsilon(1e-6));
  CHECK(r.value("fwhm") == doctest::Approx(0.15e6).epsilon(1e-6));
  CHECK(r.value("amplitude") == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(r.value("offset") == doctest::Approx(0.1).epsilon(1e-6));

  std::vector<Sample> l;
  for (int i = 0; i < 81; ++i) {
    const double x = -2e9 + 4e9 * i / 80.0;
    l.push_back({x, 5.0 / (1 + 4 * x * x / (414e6 * 414e6)), 0.05});
  }
  const FitResult lr = fit_line(l, LineModel::kLorentzian);
  CHECK(lr.value("fwhm") == doctest::Approx(414e6).epsilon(1e-6));
  CHECK(lr.value("center") == doctest::Approx(0.0).epsilon(1e-3));
}

TEST_CASE("line fit is equivariant under shifts and scaling") {
  const auto g = gaussian_line(0.0, 0.2, 1.0, 0.0, -1, 1, 31);
  const FitResult base = fit_line(g, LineModel::kGaussian);
  std::vector<Sample> moved;
  for (const auto& s : g) moved.push_back({3 * s.x + 7, s.y, s.sigma});
  const FitResult m = fit_line(moved, LineModel::kGaussian);
  CHECK(m.value("center") == doctest::Approx(3 * base.value("center") + 7).epsilon(1e-6));
  CHECK(m.value("fwhm") == doctest::Approx(3 * base.value("fwhm")).epsilon(1e-6));
}

TEST_CASE("degenerate fit inputs") {
  std::vector<Sample> flat(20, Sample{0, 1, 1});
  for (int i = 0; i < 20; ++i) flat[i].x = i;
  CHECK_THROWS_AS(fit_line(flat, LineModel::kGaussian), InvalidArgument);
  CHECK_THROWS_AS(fit_exponential_decay(flat), FitError);
  std::vector<Sample> neg = flat;
  neg[3].y = -1;
  CHECK_THROWS_AS(fit_exponential_decay(neg), InvalidArgument);
  CHECK_THROWS_AS(fit_line(std::span(flat).first(3), LineModel::kGaussian), InvalidArgument);
}

TEST_CASE("exponential fit") {
  std::vector<Sample> s;
  for (int i = 0; i < 30; ++i) {
    const double t = 10e-6 + i * 10e-6;
    s.push_back({t, 0.9 * std::exp(-t / 0.11e-3), 0.01});
  }
  const FitResult r = fit_exponential_decay(s);
  CHECK(r.value("tau") == doctest::Approx(0.11e-3).epsilon(1e-6));
  CHECK(r.value("amplitude") == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(r.reduced_chi2 < 1e-10);
}

TEST_CASE("fit errors have unit pulls") {
  std::vector<double> pulls;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    Rng rng = make_stream(rep, Stream::kShots);
    auto g = gaussian_line(0.0, 0.15e6, 1.0, 0.2, -0.4e6, 0.4e6, 41);
    for (auto& p : g) {
      p.sigma = 0.05;
      p.y += 0.05 * standard_normal(rng);
    }
    const FitResult r = fit_line(g, LineModel::kGaussian);
    pulls.push_back(r.value("center") / r.error("center"));
  }
  CHECK(std::abs(testing::mean(pulls)) < 0.25);
  CHECK(testing::variance(pulls) == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("bunching fit") {
  G2Histogram h;
  h.period_s = 1e-3;
  for (int k = 0; k <= 400; ++k) {
    h.lags.push_back(k);
    h.values.push_back(k == 0 ? 0.5 : 1 + 0.04 * std::exp(-k * 1e-3 / 80e-3));
    h.errors.push_back(0.001);
    h.coincidences.push_back(1000);
  }
  const FitResult r = fit_bunching(h);
  CHECK(r.value("tau_d") == doctest::Approx(80e-3).epsilon(1e-6));
  CHECK(r.value("amplitude") == doctest::Approx(0.04).epsilon(1e-6));
}

TEST_CASE("damped Rabi fit") {
  std::vector<Sample> s;
  for (int i = 0; i <= 40; ++i) s.push_back({double(i), rabi_model(i, 0.9, 0.03, 1.1, 0.002, 0.01), 0.001});
  const FitResult r = fit_rabi(s, 1.0);
  CHECK(r.value("n_pi") == doctest::Approx(1.1).epsilon(1e-5));
  CHECK(r.value("damping") == doctest::Approx(0.03).epsilon(1e-4));
  CHECK(r.value("slope") == doctest::Approx(0.002).epsilon(1e-4));
  CHECK(rabi_model(1.1, 1, 0, 1.1, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("fit result JSON round trip") {
  const auto g = gaussian_line(0.0, 0.2, 1.0, 0.0, -1, 1, 31);
  const FitResult r = fit_line(g, LineModel::kGaussian);
  const FitResult back = fit_result_from_json(r.to_json());
  CHECK(back.model == r.model);
  CHECK(back.points == r.points);
  CHECK(back.value("fwhm") == doctest::Approx(r.value("fwhm")));
  CHECK_THROWS_AS(r.param("sigma"), InvalidArgument);
  CHECK(std::string(model_name(FitModel::kExpBunching)) == "exp-bunching");
}

TEST_CASE("peak finding and baseline helpers") {
  const std::vector<double> y{0, 1, 5, 1, 0, 0, 3, 0, 4, 0};
  CHECK(find_peaks(y, 2.0, 1) == std::vector<std::size_t>{2, 6, 8});
  CHECK(find_peaks(y, 2.0, 3) == std::vector<std::size_t>{2, 8});
  CHECK(find_peaks(y, 10.0, 1).empty());
  const std::vector<double> z{1, 9, 1, 1, 1, 7, 1};
  const auto m = running_median(z, 1);
  CHECK(m == std::vector<double>{9, 1, 1, 1, 1, 1, 7});
  CHECK(running_median(z, 10) == std::vector<double>(7, 1.0));
  CHECK(deconvolve_quadrature(5, 3) == 4);
  CHECK(deconvolve_quadrature(2, 3) == 0);
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1};
  CHECK(pearson(a, b) == doctest::Approx(1));
  CHECK(pearson(a, c) == doctest::Approx(-1));
  CHECK_THROWS_AS(pearson(a, std::vector<double>{1.0}), InvalidArgument);
}

TEST_CASE("g2 CSV") {
  G2Histogram h;
  h.period_s = 1e-3;
  h.lags = {0, 1};
  h.values = {0.5, 1.0};
  h.errors = {0.1, 0.1};
  h.coincidences = {10, 20};
  std::ostringstream os;
  write_g2_csv(os, h);
  CHECK(os.str() == "lag,tau_s,g2,error,coincidences\n0,0,0.5,0.1,10\n1,0.001,1,0.1,20\n");
}
