#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "cbslab/spectral_problem.hpp"

namespace cbslab {

struct GaussNewtonOptions {
  int max_iterations = 500;
  double param_tol = 1e-10;  // relative change per parameter
  int max_halvings = 40;
};

struct GaussNewtonReport {
  int iterations = 0;
  bool converged = false;
  bool clamped = false;  // some iterate hit a lower bound
  double rss = std::numeric_limits<double>::quiet_NaN();
};

/// Damped Gauss-Newton for small nonlinear least-squares fits.
///
/// `model(theta, residuals, jacobian)` fills the residual vector and its
/// Jacobian d residual / d theta. Each iteration solves for the full
/// Gauss-Newton step and halves it until the residual sum of squares
/// decreases; parameters falling below their lower bound are clamped to
/// it. Stops when the relative parameter change drops below param_tol.
template <typename Scalar, typename ModelFn>
GaussNewtonReport damped_gauss_newton(VectorX<Scalar>& theta, ModelFn&& model,
                                      const VectorX<Scalar>& lower_bounds,
                                      Eigen::Index n_residuals,
                                      const GaussNewtonOptions& options = {}) {
  const Eigen::Index n_params = theta.size();
  VectorX<Scalar> residuals(n_residuals);
  MatrixX<Scalar> jacobian(n_residuals, n_params);
  VectorX<Scalar> trial(n_params);

  GaussNewtonReport report;
  model(theta, residuals, jacobian);
  Scalar rss = residuals.squaredNorm();

  auto clamp = [&](VectorX<Scalar>& p) {
    for (Eigen::Index i = 0; i < n_params; ++i) {
      if (p[i] < lower_bounds[i]) {
        p[i] = lower_bounds[i];
        report.clamped = true;
      }
    }
  };

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    report.iterations = iter + 1;
    const VectorX<Scalar> step =
        jacobian.colPivHouseholderQr().solve(-residuals);
    if (!step.allFinite()) break;

    Scalar scale(1);
    Scalar trial_rss = rss;
    bool improved = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      trial = theta + scale * step;
      clamp(trial);
      model(trial, residuals, jacobian);
      trial_rss = residuals.squaredNorm();
      if (std::isfinite(trial_rss) && trial_rss <= rss) {
        improved = true;
        break;
      }
      scale /= Scalar(2);
    }
    if (!improved) {
      // restore the state at theta and stop at the best point seen
      model(theta, residuals, jacobian);
      break;
    }

    Scalar max_rel_change(0);
    for (Eigen::Index i = 0; i < n_params; ++i) {
      const Scalar denom =
          std::max(std::abs(theta[i]), Scalar(1e-30));
      max_rel_change =
          std::max(max_rel_change, std::abs(trial[i] - theta[i]) / denom);
    }
    theta = trial;
    rss = trial_rss;
    if (max_rel_change < Scalar(options.param_tol)) {
      report.converged = true;
      break;
    }
  }
  report.rss = static_cast<double>(rss);
  return report;
}

}  // namespace cbslab
