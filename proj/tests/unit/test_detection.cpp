#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cavsim/detection.hpp"
#include "cavsim/error.hpp"
#include "stats.hpp"

using namespace cavsim;

TEST_CASE("efficiency chain") {
  const EfficiencyChain c;
  CHECK(total_efficiency(c) == doctest::Approx(74.0 / 75.0 * 0.34 * 0.63 * 0.1136));
  CHECK(total_efficiency(c) == doctest::Approx(0.0240).epsilon(2e-3));
  EfficiencyChain bad;
  bad.eta_fiber = 1.2;
  CHECK_THROWS_AS(total_efficiency(bad), InvalidArgument);
}

TEST_CASE("emission delays are exponential in the lifetime") {
  const double tau = 0.152e-3, period = 5e-3;
  std::vector<Excitation> ex;
  for (int i = 0; i < 20000; ++i) ex.push_back({i * period, 0, 1.0, tau});
  EfficiencyChain unit{1, 1, 1, 1};
  const ClickStream s = emit_clicks(ex, unit, 0.0, 20000 * period, 1, 0.0);
  CHECK(s.clicks.size() > 19900);
  std::vector<double> delays;
  for (const Click& c : s.clicks) {
    const double t = c.t_ns * 1e-9;
    delays.push_back(t - std::floor(t / period) * period);
  }
  const double d = testing::ks_statistic(delays, [&](double x) { return 1 - std::exp(-x / tau); });
  CHECK(d < testing::ks_critical_1pct(delays.size()) + 1e-5);
}

TEST_CASE("click count matches the thinned excitation number") {
  std::vector<Excitation> ex;
  for (int i = 0; i < 100000; ++i) ex.push_back({i * 1e-3, 0, 0.8, 0.152e-3});
  const EfficiencyChain c;
  const ClickStream s = emit_clicks(ex, c, 0.0, 100.0, 2);
  const double mu = 100000 * 0.8 * c.total();
  CHECK(std::abs(static_cast<double>(s.clicks.size()) - mu) < 3 * std::sqrt(mu));
  for (std::size_t i = 1; i < s.clicks.size(); ++i) CHECK(s.clicks[i].t_ns >= s.clicks[i - 1].t_ns);
}

TEST_CASE("dark counts are a homogeneous Poisson process") {
  ClickBuilder b({200.0, 0.0}, 3);
  const ClickStream s = b.finish(100.0);
  const double mu = 200.0 * 100.0;
  CHECK(std::abs(static_cast<double>(s.clicks.size()) - mu) < 4 * std::sqrt(mu));
  std::vector<double> t;
  for (const Click& c : s.clicks) {
    CHECK(c.origin == ClickOrigin::kDark);
    t.push_back(c.t_ns * 1e-9);
  }
  CHECK(testing::ks_statistic(t, [](double x) { return x / 100.0; }) < testing::ks_critical_1pct(t.size()));
  CHECK(s.dark_rate_hz == 200.0);
  CHECK(s.duration_s() == doctest::Approx(100.0));
}

TEST_CASE("dead time suppresses close clicks") {
  ClickBuilder b({0.0, 50e-9}, 4);
  b.add_emission(1e-6, 1.0, 0.0);
  b.add_emission(1.02e-6, 1.0, 0.0);
  b.add_emission(1.2e-6, 1.0, 0.0);
  const ClickStream s = b.finish(1e-3);
  REQUIRE(s.clicks.size() == 2);
  CHECK(s.clicks[0].t_ns == 1000);
  CHECK(s.clicks[1].t_ns == 1200);
}

TEST_CASE("thinning by p_excited and efficiency commutes") {
  std::vector<Excitation> ex;
  for (int i = 0; i < 200000; ++i) ex.push_back({i * 1e-3, 0, 0.5, 0.0});
  const ClickStream a = emit_clicks(ex, {1, 0.2, 1, 1}, 0.0, 200.0, 5, 0.0);
  for (auto& e : ex) e.p_excited = 0.2;
  const ClickStream b = emit_clicks(ex, {1, 0.5, 1, 1}, 0.0, 200.0, 6, 0.0);
  const double mu = 200000 * 0.1;
  CHECK(std::abs(static_cast<double>(a.clicks.size()) - mu) < 4 * std::sqrt(mu));
  CHECK(std::abs(static_cast<double>(b.clicks.size()) - mu) < 4 * std::sqrt(mu));
}

TEST_CASE("invalid excitation input") {
  std::vector<Excitation> ex{{1.0, 0, 0.5, 0.0}, {0.5, 0, 0.5, 0.0}};
  CHECK_THROWS_AS(emit_clicks(ex, {}, 0.0, 2.0, 1), InvalidArgument);
  std::vector<Excitation> bad{{0.0, 0, 1.5, 0.0}};
  CHECK_THROWS_AS(emit_clicks(bad, {}, 0.0, 2.0, 1), InvalidArgument);
  CHECK_THROWS_AS(ClickBuilder({-1.0, 0.0}, 1), InvalidArgument);
}

TEST_CASE("click CSV round trip") {
  ClickBuilder b({50.0, 50e-9}, 7);
  for (int i = 0; i < 100; ++i) b.add_emission(i * 1e-3, 0.5, 1e-4, i % 2 ? ClickOrigin::kSignal : ClickOrigin::kBackground);
  const ClickStream s = b.finish(0.1);
  for (bool origin : {true, false}) {
    std::stringstream ss;
    write_clicks_csv(ss, s, origin);
    const ClickStream r = read_clicks_csv(ss, 50.0);
    REQUIRE(r.clicks.size() == s.clicks.size());
    for (std::size_t i = 0; i < s.clicks.size(); ++i) {
      CHECK(r.clicks[i].t_ns == s.clicks[i].t_ns);
      if (origin) CHECK(r.clicks[i].origin == s.clicks[i].origin);
    }
  }
  std::stringstream bad("time,origin\n1,dark\n");
  CHECK_THROWS_AS(read_clicks_csv(bad), InvalidArgument);
}
