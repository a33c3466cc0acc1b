#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cavsim/detection.hpp"

namespace cavsim {

/// Pulsed second-order correlation. Lag k counts pulse periods; lag 0 holds
/// pairs of distinct clicks within the same period.
struct G2Histogram {
  std::vector<int> lags;
  std::vector<double> values;
  std::vector<double> errors;
  std::vector<double> coincidences;
  double normalization = 0.0;  ///< mean coincidences per long lag
  double period_s = 0.0;
  std::size_t clicks = 0;
  std::size_t pulses = 0;

  double at(int lag) const;
};

struct G2Options {
  double period_s = 1e-3;
  int max_lag = 1000;
  int norm_min_lag = 500;     ///< lags [norm_min_lag, max_lag] define g2 = 1
  double min_norm_coincidences = 10.0;
};

/// Throws InsufficientData when the long-lag normalization is too poorly sampled.
G2Histogram compute_g2(const ClickStream& stream, const G2Options& opts);

/// Fraction of clicks attributable to detector darks: dark_rate * duration / clicks.
double dark_fraction(const ClickStream& stream);

/// Removes an uncorrelated Poissonian background carrying a fraction r of all
/// clicks: (g2 - 2 r (1 - r) - r^2) / (1 - r)^2.
double rescale_g2(double raw, double background_fraction);

/// Background fraction that maps `raw` onto `corrected` (inverse of rescale_g2).
double background_fraction_for(double raw, double corrected);

enum class FitModel { kGaussian, kLorentzian, kExponential, kExpBunching, kRabiDamped };

const char* model_name(FitModel model);

struct FitParam {
  std::string name;
  double value = 0.0;
  double error = 0.0;
};

struct FitResult {
  FitModel model = FitModel::kGaussian;
  std::vector<FitParam> params;
  double reduced_chi2 = 0.0;
  int iterations = 0;
  std::size_t points = 0;

  const FitParam& param(const std::string& name) const;
  double value(const std::string& name) const { return param(name).value; }
  double error(const std::string& name) const { return param(name).error; }
  std::string to_json() const;
};

FitResult fit_result_from_json(const std::string& text);

struct Sample {
  double x = 0.0;
  double y = 0.0;
  double sigma = 1.0;
};

/// Fits 1 + A exp(-tau / tau_d) to lags >= 1 (tau = lag * period).
FitResult fit_bunching(const G2Histogram& g2);

enum class LineModel { kGaussian, kLorentzian };

/// Center, FWHM, amplitude and offset of a single peak. For multi-peak data
/// only a window around the global maximum is fitted. Throws InvalidArgument
/// on flat or too-short data.
FitResult fit_line(std::span<const Sample> scan, LineModel model);

/// A exp(-t / tau). Throws InvalidArgument on non-positive ordinates and
/// FitError when the decay constant is not identifiable (flat data).
FitResult fit_exponential_decay(std::span<const Sample> points);

/// Damped Rabi curve in the photon number N:
/// S = A/2 (1 - exp(-d theta) cos theta) + c N + o, theta = pi sqrt(N / N_pi).
FitResult fit_rabi(std::span<const Sample> points, double n_pi_guess);

double rabi_model(double n, double amplitude, double damping, double n_pi, double slope, double offset);

/// Indices of local maxima exceeding `threshold`, at least `min_separation`
/// samples apart (the larger peak wins).
std::vector<std::size_t> find_peaks(std::span<const double> y, double threshold, std::size_t min_separation);

/// Median over a sliding window of 2 half_window + 1 samples, truncated at the ends.
std::vector<double> running_median(std::span<const double> y, std::size_t half_window);

/// Quadrature deconvolution sqrt(w^2 - probe^2), or 0 when the probe is wider.
double deconvolve_quadrature(double width, double probe_width);

/// Pearson correlation coefficient.
double pearson(std::span<const double> a, std::span<const double> b);

void write_g2_csv(std::ostream& os, const G2Histogram& g2);

}  // namespace cavsim
