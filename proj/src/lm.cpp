#include "lm.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cavsim/error.hpp"

namespace cavsim::detail {

namespace {

struct Linearization {
  Eigen::MatrixXd jtj;
  Eigen::VectorXd jtr;
  double chi2 = 0.0;
};

double chi2_at(std::span<const Sample> data, const ModelFn& model, const Eigen::VectorXd& p,
               Eigen::VectorXd& grad) {
  double chi2 = 0;
  for (const Sample& s : data) {
    const double r = (s.y - model(s.x, p, grad)) / s.sigma;
    chi2 += r * r;
  }
  return chi2;
}

Linearization linearize(std::span<const Sample> data, const ModelFn& model, const Eigen::VectorXd& p) {
  const auto n = p.size();
  Linearization lin{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), 0.0};
  Eigen::VectorXd grad(n);
  for (const Sample& s : data) {
    const double f = model(s.x, p, grad);
    const double r = (s.y - f) / s.sigma;
    const Eigen::VectorXd j = grad / s.sigma;
    lin.jtj.noalias() += j * j.transpose();
    lin.jtr.noalias() += j * r;
    lin.chi2 += r * r;
  }
  return lin;
}

std::string describe(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os.precision(6);
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

Eigen::VectorXd column_scale(const Eigen::MatrixXd& jtj) {
  Eigen::VectorXd d(jtj.rows());
  for (Eigen::Index i = 0; i < jtj.rows(); ++i) {
    const double c = std::abs(jtj(i, i));
    d[i] = c > 0 && std::isfinite(c) ? 1.0 / std::sqrt(c) : 1.0;
  }
  return d;
}

}  // namespace

LmOutcome levenberg_marquardt(std::span<const Sample> data, const ModelFn& model,
                              const Eigen::VectorXd& initial, const LmOptions& opts) {
  for (const Sample& s : data)
    if (!(s.sigma > 0) || !std::isfinite(s.y) || !std::isfinite(s.x))
      throw InvalidArgument("fit data needs finite values and positive uncertainties");
  if (data.size() < static_cast<std::size_t>(initial.size()))
    throw InvalidArgument("fewer data points than fit parameters");

  std::ostringstream trace;
  trace << "initial guess " << describe(initial) << '\n';
  auto fail = [&](const std::string& why) -> FitError {
    return FitError("fit did not converge (" + why + ")\n" + trace.str());
  };

  Eigen::VectorXd p = initial;
  Eigen::VectorXd grad(p.size());
  Linearization lin = linearize(data, model, p);
  if (!std::isfinite(lin.chi2)) throw fail("non-finite residuals at initial guess");
  const double chi2_floor = 1e-28 * static_cast<double>(data.size());
  double lambda = 1e-3;
  int it = 0;
  int creeping = 0;
  bool converged = lin.chi2 <= chi2_floor;
  while (!converged && it < opts.max_iterations) {
    ++it;
    // Solve in coordinates scaled to unit curvature; parameters can differ
    // by many orders of magnitude (Hz against counts per shot).
    const Eigen::VectorXd d = column_scale(lin.jtj);
    Eigen::MatrixXd a = d.asDiagonal() * lin.jtj * d.asDiagonal();
    a.diagonal().array() += lambda * a.diagonal().array().max(1e-30);
    const Eigen::VectorXd step = d.asDiagonal() * a.ldlt().solve(d.asDiagonal() * lin.jtr);
    const Eigen::VectorXd trial = p + step;
    const double chi2_new = step.allFinite() ? chi2_at(data, model, trial, grad) : INFINITY;
    trace << "iter " << it << " chi2 " << lin.chi2 << " lambda " << lambda << " trial " << chi2_new << '\n';

    if (std::isfinite(chi2_new) && chi2_new < lin.chi2) {
      const double drop = lin.chi2 - chi2_new;
      double rel_step = 0;
      for (Eigen::Index i = 0; i < p.size(); ++i)
        rel_step = std::max(rel_step, std::abs(step[i]) / (std::abs(p[i]) + 1e-300));
      p = trial;
      lin = linearize(data, model, p);
      lambda = std::max(lambda / 10.0, 1e-12);
      // Noisy data can leave a shallow valley that is crossed in tiny
      // accepted steps; stop once progress has stalled for several steps.
      creeping = drop <= 1e-7 * chi2_new ? creeping + 1 : 0;
      converged = drop <= opts.rel_tolerance * chi2_new || rel_step <= opts.rel_tolerance ||
                  chi2_new <= chi2_floor || creeping >= 5;
    } else {
      lambda *= 10.0;
      // No downhill step at any damping: already at the minimum to precision.
      if (lambda > 1e20) converged = true;
    }
  }
  if (!converged) throw fail("iteration limit reached");
  if (!p.allFinite()) throw fail("non-finite parameters");

  LmOutcome out;
  out.params = p;
  out.chi2 = lin.chi2;
  out.iterations = it;
  // Pseudo-inverse of the scaled normal matrix; parameters with a component
  // along a null direction get infinite variance.
  const Eigen::VectorXd d = column_scale(lin.jtj);
  const Eigen::MatrixXd a = d.asDiagonal() * lin.jtj * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const double cut = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  std::vector<bool> undetermined(static_cast<std::size_t>(p.size()), false);
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] > cut) {
      inv += v.col(k) * v.col(k).transpose() / ev[k];
    } else {
      for (Eigen::Index i = 0; i < p.size(); ++i)
        if (std::abs(v(i, k)) > 1e-6) undetermined[static_cast<std::size_t>(i)] = true;
    }
  }
  out.covariance = d.asDiagonal() * inv * d.asDiagonal();
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (undetermined[static_cast<std::size_t>(i)]) out.covariance(i, i) = INFINITY;
  return out;
}

}  // namespace cavsim::detail
