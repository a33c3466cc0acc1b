#include <doctest.h>

#include <cmath>

#include "cavsim/cavity.hpp"
#include "cavsim/constants.hpp"
#include "cavsim/error.hpp"

using namespace cavsim;

namespace {
constexpr double kC = 299792458.0;
}

TEST_CASE("finesse of the measured mirror triple") {
  const MirrorSet m{22e-6, 20e-6, 27e-6};
  // 2 pi / 69 ppm
  CHECK(compute_finesse(m) == doctest::Approx(91060.7).epsilon(1e-6));
  CHECK(std::abs(compute_finesse(m) - 9.0e4) < 0.7e4);
  CHECK(compute_finesse({0.0, 0.0, 1e-6}) == doctest::Approx(2 * kPi * 1e6));
  CHECK_THROWS_AS(compute_finesse({0.0, 0.0, 0.0}), InvalidArgument);
}

TEST_CASE("linewidth and free spectral range") {
  const double fsr = kC / (2 * 128e-6);
  CHECK(free_spectral_range(128e-6) == doctest::Approx(fsr).epsilon(1e-12));
  const double kappa = compute_linewidth(91060.7, 128e-6);
  CHECK(kappa == doctest::Approx(12.8603e6).epsilon(1e-4));
  CHECK(std::abs(kappa - 13e6) < 1e6);
  CHECK(quality_factor(13e6, 1536.5e-9) == doctest::Approx(kC / 1536.5e-9 / 13e6));
}

TEST_CASE("finesse times linewidth equals the free spectral range") {
  for (double t : {1e-6, 22e-6, 400e-6})
    for (double l : {20e-6, 128e-6, 1e-3}) {
      const double f = compute_finesse({t, 20e-6, 27e-6});
      CHECK(f * compute_linewidth(f, l) == doctest::Approx(free_spectral_range(l)).epsilon(1e-14));
    }
}

TEST_CASE("mode waist from the plano-concave geometry") {
  CavityGeometry g;
  const double w0 = std::sqrt(g.wavelength_m / kPi * std::sqrt(g.l_opt_m * (g.roc_m - g.l_opt_m)));
  CHECK(mode_waist(g) == doctest::Approx(w0).epsilon(1e-12));
  CHECK(mode_waist(g) == doctest::Approx(5.362e-6).epsilon(1e-3));
  CHECK(mode_volume(g) == doctest::Approx(kPi / 4 * w0 * w0 * g.l_opt_m).epsilon(1e-12));
  g.roc_m = 100e-6;
  CHECK_THROWS_AS(mode_waist(g), InvalidArgument);
}

TEST_CASE("two-level Purcell factor") {
  const double lam = 1536.5e-9, n = 1.78;
  const CavityGeometry g;
  const double p = compute_purcell_tl(1.5e7, mode_volume(g), lam, n);
  CHECK(p > 362.0 / 1.5);
  CHECK(p < 362.0 * 1.5);
  const double v_unit = 3.0 / (4 * kPi * kPi) * std::pow(lam / n, 3) * 1.5e7;
  CHECK(compute_purcell_tl(1.5e7, v_unit, lam, n) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(compute_purcell_tl(3e7, 1e-15, lam, n) == doctest::Approx(2 * compute_purcell_tl(1.5e7, 1e-15, lam, n)));
}

TEST_CASE("branching reduces the Purcell factor") {
  CHECK(apply_branching(362, 0.204) == doctest::Approx(73.848).epsilon(1e-9));
  CHECK(std::round(apply_branching(362, 0.204)) == 74);
  CHECK(apply_branching(362, 0) == 0);
  CHECK(apply_branching(362, 1) == 362);
  double last = -1;
  for (double b = 0; b <= 1.0; b += 0.05) {
    const double v = apply_branching(362, b);
    CHECK(v >= last);
    CHECK(v <= 362);
    last = v;
  }
  CHECK_THROWS_AS(apply_branching(362, 1.2), InvalidArgument);
}

TEST_CASE("outcoupling efficiency and loss budget") {
  const MirrorSet m{22e-6, 20e-6, 27e-6};
  CHECK(outcoupling_efficiency(m) == doctest::Approx(22.0 / 69.0).epsilon(1e-12));
  CHECK(std::abs(outcoupling_efficiency(m) - 0.34) < 0.03);
  CHECK(outcoupling_efficiency({5e-6, 0, 0}) == 1.0);
  CHECK(outcoupling_efficiency({20e-6, 20e-6, 20e-6}) == doctest::Approx(1.0 / 3.0));
  for (const MirrorSet& x : {m, MirrorSet{1e-6, 3e-6, 0}, MirrorSet{7e-6, 0, 9e-6}})
    CHECK(outcoupling_efficiency(x) + back_escape_fraction(x) + loss_fraction(x) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mode coupling") {
  const CavityGeometry g;
  const double w0 = mode_waist(g);
  CHECK(mode_coupling({0, 0}, g) == doctest::Approx(1.0));
  CHECK(mode_coupling({w0 / std::sqrt(2.0), 0}, g) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  const double node = g.wavelength_m / (4 * g.n_host);
  CHECK(mode_coupling({0, node}, g) == doctest::Approx(0.0).epsilon(1e-12));
  for (double z : {0.0, 0.1e-6, 3e-6, 18e-6}) {
    double last = 2;
    for (double r = 0; r < 3 * w0; r += w0 / 10) {
      const double c = mode_coupling({r, z}, g);
      CHECK(c >= 0);
      CHECK(c <= 1);
      CHECK(c <= last);
      last = c;
    }
  }
}

TEST_CASE("cavity transmission is a unit Lorentzian") {
  CHECK(cavity_transmission(0, 13e6) == 1.0);
  CHECK(cavity_transmission(6.5e6, 13e6) == doctest::Approx(0.5));
  CHECK(cavity_transmission(-6.5e6, 13e6) == doctest::Approx(0.5));
}

TEST_CASE("derived device values") {
  CavityParams p;
  const CavityDerived d = derive_cavity(p);
  CHECK(d.finesse == doctest::Approx(91060.7).epsilon(1e-6));
  CHECK(d.fwhm_linewidth_hz == doctest::Approx(12.8603e6).epsilon(1e-4));
  CHECK(d.eta_out == doctest::Approx(0.318841).epsilon(1e-5));
  CHECK(d.p_tl == d.p_tl_model);
  CHECK(d.p_tl_model == doctest::Approx(256.5).epsilon(1e-3));
  p.p_tl_override = 362.0;
  const CavityDerived o = derive_cavity(p);
  CHECK(o.p_tl == 362.0);
  CHECK(o.p_tl_model == d.p_tl_model);
  CHECK(o.p_branched == doctest::Approx(73.848));
}
