#pragma once

// Levenberg-Marquardt with analytic Jacobians for the fixed fit models.

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>

#include "cavsim/analysis.hpp"

namespace cavsim::detail {

/// Model value at x; writes d(model)/d(params) into `grad`.
using ModelFn = std::function<double(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> grad)>;

struct LmOptions {
  int max_iterations = 3000;
  double rel_tolerance = 1e-10;
};

struct LmOutcome {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  int iterations = 0;
};

/// Throws FitError (with initial guess and trace) on non-convergence.
LmOutcome levenberg_marquardt(std::span<const Sample> data, const ModelFn& model,
                              const Eigen::VectorXd& initial, const LmOptions& opts = {});

}  // namespace cavsim::detail
