#pragma once

#include <numbers>

namespace cavsim {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s

/// FWHM = kFwhmPerSigma * sigma for a Gaussian.
inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)
inline constexpr double kLn2 = std::numbers::ln2;

inline constexpr double gaussian_sigma_from_fwhm(double fwhm) { return fwhm / kFwhmPerSigma; }
inline constexpr double gaussian_fwhm_from_sigma(double sigma) { return sigma * kFwhmPerSigma; }

}  // namespace cavsim
