#pragma once

#include <optional>

namespace cavsim {

/// Fractional per-round-trip mirror transmissions and losses.
struct MirrorSet {
  double t_out = 22e-6;   ///< flat outcoupling mirror
  double t_back = 20e-6;  ///< concave mirror
  double loss = 27e-6;    ///< absorption + scattering

  double total() const { return t_out + t_back + loss; }
};

/// Plano-concave resonator geometry. The membrane sits on the flat mirror,
/// which is where the Gaussian mode has its waist.
struct CavityGeometry {
  double roc_m = 155e-6;
  double l_opt_m = 128e-6;
  double wavelength_m = 1536.5e-9;
  double n_host = 1.78;
  double membrane_thickness_m = 19e-6;
};

struct CavityParams {
  MirrorSet mirrors;
  CavityGeometry geometry;
  double branching = 0.204;             ///< fraction of decay on the enhanced transition
  std::optional<double> p_tl_override;  ///< replaces the Gaussian-mode estimate when set
};

struct CavityDerived {
  double finesse;
  double fwhm_linewidth_hz;
  double fsr_hz;
  double quality_factor;
  double waist_m;
  double mode_volume_m3;
  double p_tl;        ///< two-level Purcell factor at the field maximum
  double p_tl_model;  ///< Gaussian-mode estimate, reported even when overridden
  double p_branched;
  double eta_out;
  double eta_back;
  double eta_loss;
};

/// Axial/radial location of a dopant in the cavity mode. `z_m` is measured
/// from the waist plane, which is taken to coincide with a field antinode.
struct ModePosition {
  double r_m = 0.0;
  double z_m = 0.0;
  bool operator==(const ModePosition&) const = default;
};

/// F = 2 pi / (total round-trip loss). Throws on zero loss.
double compute_finesse(const MirrorSet& mirrors);

double free_spectral_range(double l_opt_m);

/// Cavity FWHM linewidth in Hz: FSR / finesse.
double compute_linewidth(double finesse, double l_opt_m);

double quality_factor(double linewidth_hz, double wavelength_m);

/// Waist radius (1/e^2 intensity) of the plano-concave mode.
double mode_waist(const CavityGeometry& geometry);
double rayleigh_range(const CavityGeometry& geometry);
double mode_volume(const CavityGeometry& geometry);

/// Two-level Purcell factor (3 / 4 pi^2) (lambda / n)^3 Q / V.
double compute_purcell_tl(double quality, double mode_volume_m3, double wavelength_m, double n_host);

double apply_branching(double p_tl, double beta);

/// Probability that an intracavity photon leaves through the outcoupler.
double outcoupling_efficiency(const MirrorSet& mirrors);
double back_escape_fraction(const MirrorSet& mirrors);
double loss_fraction(const MirrorSet& mirrors);

/// Relative intensity of the cavity mode at `pos`, in [0, 1]:
/// exp(-2 r^2 / w(z)^2) cos^2(k z) with k = 2 pi n / lambda.
double mode_coupling(const ModePosition& pos, const CavityGeometry& geometry);

/// Lorentzian intensity transmission of the cavity at a detuning from resonance.
double cavity_transmission(double detuning_hz, double linewidth_hz);

void validate(const CavityGeometry& geometry);
void validate(const MirrorSet& mirrors);

CavityDerived derive_cavity(const CavityParams& params);

}  // namespace cavsim
