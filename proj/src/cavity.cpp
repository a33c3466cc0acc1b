#include "cavsim/cavity.hpp"

#include <cmath>

#include "cavsim/constants.hpp"
#include "cavsim/error.hpp"

namespace cavsim {

void validate(const MirrorSet& m) {
  require(m.t_out >= 0 && m.t_back >= 0 && m.loss >= 0, "mirror transmissions and loss must be >= 0");
}

void validate(const CavityGeometry& g) {
  require(g.wavelength_m > 0, "wavelength must be > 0");
  require(g.n_host > 0, "host refractive index must be > 0");
  require(g.l_opt_m > 0 && g.l_opt_m < g.roc_m,
          "unstable plano-concave resonator: need 0 < l_opt < roc");
}

double compute_finesse(const MirrorSet& mirrors) {
  validate(mirrors);
  const double total = mirrors.total();
  if (total <= 0) throw InvalidArgument("infinite finesse: total round-trip loss is zero");
  require(total <= kTwoPi, "total round-trip loss must not exceed 2 pi");
  return kTwoPi / total;
}

double free_spectral_range(double l_opt_m) {
  require(l_opt_m > 0, "optical length must be > 0");
  return kSpeedOfLight / (2.0 * l_opt_m);
}

double compute_linewidth(double finesse, double l_opt_m) {
  require(finesse > 0, "finesse must be > 0");
  return free_spectral_range(l_opt_m) / finesse;
}

double quality_factor(double linewidth_hz, double wavelength_m) {
  require(linewidth_hz > 0 && wavelength_m > 0, "linewidth and wavelength must be > 0");
  return (kSpeedOfLight / wavelength_m) / linewidth_hz;
}

double mode_waist(const CavityGeometry& g) {
  validate(g);
  const double w0_sq = (g.wavelength_m / kPi) * std::sqrt(g.l_opt_m * (g.roc_m - g.l_opt_m));
  return std::sqrt(w0_sq);
}

double rayleigh_range(const CavityGeometry& g) {
  const double w0 = mode_waist(g);
  return kPi * w0 * w0 * g.n_host / g.wavelength_m;
}

double mode_volume(const CavityGeometry& g) {
  const double w0 = mode_waist(g);
  return 0.25 * kPi * w0 * w0 * g.l_opt_m;
}

double compute_purcell_tl(double quality, double volume, double wavelength_m, double n_host) {
  require(quality > 0 && volume > 0 && wavelength_m > 0 && n_host > 0,
          "Purcell inputs must all be > 0");
  const double lam_n = wavelength_m / n_host;
  return 3.0 / (4.0 * kPi * kPi) * lam_n * lam_n * lam_n * quality / volume;
}

double apply_branching(double p_tl, double beta) {
  require(beta >= 0 && beta <= 1, "branching ratio must lie in [0, 1]");
  return beta * p_tl;
}

double outcoupling_efficiency(const MirrorSet& m) {
  validate(m);
  require(m.total() > 0, "total loss must be > 0");
  return m.t_out / m.total();
}

double back_escape_fraction(const MirrorSet& m) {
  validate(m);
  require(m.total() > 0, "total loss must be > 0");
  return m.t_back / m.total();
}

double loss_fraction(const MirrorSet& m) {
  validate(m);
  require(m.total() > 0, "total loss must be > 0");
  return m.loss / m.total();
}

double mode_coupling(const ModePosition& pos, const CavityGeometry& g) {
  const double w0 = mode_waist(g);
  const double zr = rayleigh_range(g);
  const double wz_sq = w0 * w0 * (1.0 + (pos.z_m / zr) * (pos.z_m / zr));
  const double k = kTwoPi * g.n_host / g.wavelength_m;
  const double c = std::cos(k * pos.z_m);
  return std::exp(-2.0 * pos.r_m * pos.r_m / wz_sq) * c * c;
}

double cavity_transmission(double detuning_hz, double linewidth_hz) {
  require(linewidth_hz > 0, "cavity linewidth must be > 0");
  const double x = 2.0 * detuning_hz / linewidth_hz;
  return 1.0 / (1.0 + x * x);
}

CavityDerived derive_cavity(const CavityParams& p) {
  validate(p.geometry);
  CavityDerived d{};
  d.finesse = compute_finesse(p.mirrors);
  d.fsr_hz = free_spectral_range(p.geometry.l_opt_m);
  d.fwhm_linewidth_hz = d.fsr_hz / d.finesse;
  d.quality_factor = quality_factor(d.fwhm_linewidth_hz, p.geometry.wavelength_m);
  d.waist_m = mode_waist(p.geometry);
  d.mode_volume_m3 = mode_volume(p.geometry);
  d.p_tl_model = compute_purcell_tl(d.quality_factor, d.mode_volume_m3, p.geometry.wavelength_m,
                                    p.geometry.n_host);
  d.p_tl = p.p_tl_override.value_or(d.p_tl_model);
  d.p_branched = apply_branching(d.p_tl, p.branching);
  d.eta_out = outcoupling_efficiency(p.mirrors);
  d.eta_back = back_escape_fraction(p.mirrors);
  d.eta_loss = loss_fraction(p.mirrors);
  return d;
}

}  // namespace cavsim
