#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cbslab/gauss_newton.hpp"
#include "cbslab/spectral_problem.hpp"

namespace cbslab {

/// One (batch size, steps-to-target) measurement, optionally labeled with
/// the scale it came from.
template <typename Scalar = double>
struct StepObservation {
  std::int64_t batch_size = 0;
  Scalar steps{};
  std::optional<Scalar> n_millions;  // model size label
  std::optional<Scalar> d_tokens;    // data size label
};

enum class AlphaMode { fixed_one, free };

/// Fitted steps-vs-batch law Y(B) = a + b / B^alpha, fit in log space.
template <typename Scalar = double>
struct StepLawFit {
  Scalar a{};      // asymptotic step floor
  Scalar b{};
  Scalar alpha{};
  AlphaMode alpha_mode = AlphaMode::fixed_one;
  Scalar rss{};    // residual sum of squares of log Y
  bool converged = true;
  bool clamped = false;

  Scalar steps_at(Scalar batch) const {
    return a + b * std::pow(batch, -alpha);
  }
};

namespace detail {

template <typename Scalar>
void validate_step_obs(std::span<const StepObservation<Scalar>> obs) {
  for (const auto& o : obs) {
    if (o.batch_size < 1)
      throw std::invalid_argument("batch sizes must be >= 1");
    if (!(o.steps > Scalar(0)))
      throw std::invalid_argument("step counts must be positive");
  }
}

template <typename Scalar>
std::size_t distinct_batches(std::span<const StepObservation<Scalar>> obs) {
  std::set<std::int64_t> seen;
  for (const auto& o : obs) seen.insert(o.batch_size);
  return seen.size();
}

}  // namespace detail

/// Plain least-squares line y = slope * x + intercept.
template <typename Scalar>
std::pair<Scalar, Scalar> linear_fit(std::span<const Scalar> x,
                                     std::span<const Scalar> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2)
    throw std::invalid_argument("need >= 2 paired points");
  Scalar mean_x{}, mean_y{};
  for (std::size_t i = 0; i < n; ++i) {
    mean_x += x[i];
    mean_y += y[i];
  }
  mean_x /= static_cast<Scalar>(n);
  mean_y /= static_cast<Scalar>(n);
  Scalar sxy{}, sxx{};
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mean_x) * (y[i] - mean_y);
    sxx += (x[i] - mean_x) * (x[i] - mean_x);
  }
  if (!(sxx > Scalar(0)))
    throw std::invalid_argument("degenerate fit: all x identical");
  const Scalar slope = sxy / sxx;
  return {slope, mean_y - slope * mean_x};
}

/// Fits log Y = log(a + b / B^alpha) by damped Gauss-Newton with step
/// halving. Initialization: a0 = Y at the largest batch, b0 = (Y at the
/// smallest batch - a0) * B_min, alpha0 = 1. Parameters are kept positive
/// by clamping at 1e-12. Needs >= 3 distinct batch sizes (>= 4 when alpha
/// is free).
template <typename Scalar>
StepLawFit<Scalar> fit_step_law(std::span<const StepObservation<Scalar>> obs,
                                AlphaMode alpha_mode) {
  detail::validate_step_obs(obs);
  const std::size_t needed = alpha_mode == AlphaMode::free ? 4 : 3;
  if (detail::distinct_batches(obs) < needed)
    throw std::invalid_argument("too few distinct batch sizes for the fit");

  const StepObservation<Scalar>* lo = &obs[0];
  const StepObservation<Scalar>* hi = &obs[0];
  for (const auto& o : obs) {
    if (o.batch_size < lo->batch_size) lo = &o;
    if (o.batch_size > hi->batch_size) hi = &o;
  }
  const Scalar floor(1e-12);
  const Scalar a0 = std::max(hi->steps, floor);
  const Scalar b0 = std::max(
      (lo->steps - a0) * static_cast<Scalar>(lo->batch_size), floor);

  const Eigen::Index n_params = alpha_mode == AlphaMode::free ? 3 : 2;
  VectorX<Scalar> theta(n_params);
  theta[0] = a0;
  theta[1] = b0;
  if (n_params == 3) theta[2] = Scalar(1);
  VectorX<Scalar> bounds = VectorX<Scalar>::Constant(n_params, floor);

  const Eigen::Index m = static_cast<Eigen::Index>(obs.size());
  auto model = [&](const VectorX<Scalar>& p, VectorX<Scalar>& residuals,
                   MatrixX<Scalar>& jacobian) {
    const Scalar a = p[0], b = p[1];
    const Scalar alpha = n_params == 3 ? p[2] : Scalar(1);
    for (Eigen::Index j = 0; j < m; ++j) {
      const Scalar batch = static_cast<Scalar>(obs[j].batch_size);
      const Scalar pow_term = std::pow(batch, -alpha);
      const Scalar value = a + b * pow_term;
      residuals[j] = std::log(obs[j].steps) - std::log(value);
      jacobian(j, 0) = -Scalar(1) / value;
      jacobian(j, 1) = -pow_term / value;
      if (n_params == 3)
        jacobian(j, 2) = b * pow_term * std::log(batch) / value;
    }
  };

  const auto report =
      damped_gauss_newton(theta, model, bounds, m, GaussNewtonOptions{});

  StepLawFit<Scalar> fit;
  fit.a = theta[0];
  fit.b = theta[1];
  fit.alpha = n_params == 3 ? theta[2] : Scalar(1);
  fit.alpha_mode = alpha_mode;
  fit.rss = static_cast<Scalar>(report.rss);
  fit.converged = report.converged;
  fit.clamped = report.clamped;
  return fit;
}

template <typename Scalar = double>
struct CriticalBatchResult {
  Scalar batch{};
  bool non_monotone_fit = false;  // total-data curve dips before rising
};

/// Batch size at which total data processed exceeds the optimally-batched
/// amount by the given overhead: solves
///   (a + b B_opt^-alpha)(1 + overhead) B_opt = (a + b B^-alpha) B
/// for B > B_opt. For alpha = 1 the closed form
///   B* = (1 + overhead) B_opt + overhead * b / a
/// is returned after cross-checking it against the numeric root; other
/// alphas use bracketed bisection on [B_opt, 1e9] to 1e-10 relative.
template <typename Scalar>
CriticalBatchResult<Scalar> critical_batch(const StepLawFit<Scalar>& fit,
                                           Scalar b_opt, Scalar overhead) {
  if (!(b_opt > Scalar(0)))
    throw std::invalid_argument("reference batch must be positive");
  if (!(overhead > Scalar(0)))
    throw std::invalid_argument("overhead must be positive");
  if (!(fit.a > Scalar(0)) || fit.b < Scalar(0) || !(fit.alpha > Scalar(0)))
    throw std::invalid_argument("step-law parameters out of range");

  const Scalar a = fit.a, b = fit.b, alpha = fit.alpha;
  auto total_data = [&](Scalar batch) {
    return (a + b * std::pow(batch, -alpha)) * batch;
  };
  const Scalar target = (Scalar(1) + overhead) * total_data(b_opt);

  CriticalBatchResult<Scalar> result;
  // derivative a + b(1-alpha) B^-alpha is negative below this point
  if (alpha > Scalar(1)) {
    const Scalar dip_end = std::pow(b * (alpha - Scalar(1)) / a,
                                    Scalar(1) / alpha);
    result.non_monotone_fit = dip_end > b_opt;
  }

  constexpr Scalar bracket_max = Scalar(1e9);
  auto bisect_root = [&]() {
    const Scalar scan_factor = result.non_monotone_fit ? Scalar(1.05)
                                                       : Scalar(2);
    Scalar lo = b_opt;
    Scalar hi = b_opt;
    while (total_data(hi) < target) {
      lo = hi;
      hi = std::min(hi * scan_factor, bracket_max);
      if (hi >= bracket_max && total_data(hi) < target)
        throw std::runtime_error("no critical batch in [B_opt, 1e9]");
    }
    while (hi - lo > Scalar(1e-10) * hi) {
      const Scalar mid = (lo + hi) / Scalar(2);
      (total_data(mid) < target ? lo : hi) = mid;
    }
    return (lo + hi) / Scalar(2);
  };

  if (alpha == Scalar(1)) {
    const Scalar closed =
        (Scalar(1) + overhead) * b_opt + overhead * b / a;
    if (closed <= bracket_max) {
      const Scalar root = bisect_root();
      if (std::abs(closed - root) > Scalar(1e-8) * closed)
        throw std::logic_error(
            "closed form and numeric root disagree for alpha = 1");
    }
    result.batch = closed;
  } else {
    result.batch = bisect_root();
  }
  return result;
}

enum class ScaleKind { model_size_millions, tokens };

/// Fitted law B*(scale) = constant + coefficient * scale^exponent.
template <typename Scalar = double>
struct CbsLawFit {
  Scalar constant{};
  Scalar coefficient{};
  Scalar exponent{};
  ScaleKind scale_kind = ScaleKind::model_size_millions;
  Scalar rss{};
  bool converged = true;
};

/// Fits log B* = log(constant + coefficient * scale^exponent). With the
/// constant fixed to zero this is ordinary regression of log B* on log
/// scale; with it free, the same damped Gauss-Newton scheme as the step
/// law.
template <typename Scalar>
CbsLawFit<Scalar> fit_cbs_law(
    std::span<const std::pair<Scalar, Scalar>> obs, bool fix_constant,
    ScaleKind scale_kind = ScaleKind::model_size_millions) {
  const std::size_t needed = fix_constant ? 2 : 3;
  if (obs.size() < needed)
    throw std::invalid_argument("too few points for the scaling-law fit");
  std::vector<Scalar> log_scale, log_bstar;
  for (const auto& [scale, bstar] : obs) {
    if (!(scale > Scalar(0)))
      throw std::invalid_argument("scales must be positive");
    if (!(bstar > Scalar(0)))
      throw std::invalid_argument("critical batch values must be positive");
    log_scale.push_back(std::log(scale));
    log_bstar.push_back(std::log(bstar));
  }

  CbsLawFit<Scalar> fit;
  fit.scale_kind = scale_kind;
  const auto [slope, intercept] = linear_fit<Scalar>(log_scale, log_bstar);
  if (fix_constant) {
    fit.constant = Scalar(0);
    fit.coefficient = std::exp(intercept);
    fit.exponent = slope;
    Scalar rss{};
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const Scalar err = log_bstar[i] - (intercept + slope * log_scale[i]);
      rss += err * err;
    }
    fit.rss = rss;
    return fit;
  }

  VectorX<Scalar> theta(3);
  theta[0] = Scalar(0);  // constant starts at its lower bound
  theta[1] = std::exp(intercept);
  theta[2] = slope;
  VectorX<Scalar> bounds(3);
  bounds[0] = Scalar(0);
  bounds[1] = Scalar(1e-12);
  bounds[2] = -std::numeric_limits<Scalar>::infinity();

  const Eigen::Index m = static_cast<Eigen::Index>(obs.size());
  auto model = [&](const VectorX<Scalar>& p, VectorX<Scalar>& residuals,
                   MatrixX<Scalar>& jacobian) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Scalar pow_term = std::pow(obs[j].first, p[2]);
      const Scalar value = p[0] + p[1] * pow_term;
      residuals[j] = log_bstar[static_cast<std::size_t>(j)] - std::log(value);
      jacobian(j, 0) = -Scalar(1) / value;
      jacobian(j, 1) = -pow_term / value;
      jacobian(j, 2) =
          -p[1] * pow_term * std::log(obs[j].first) / value;
    }
  };
  const auto report =
      damped_gauss_newton(theta, model, bounds, m, GaussNewtonOptions{});
  fit.constant = theta[0];
  fit.coefficient = theta[1];
  fit.exponent = theta[2];
  fit.rss = static_cast<Scalar>(report.rss);
  fit.converged = report.converged;
  return fit;
}

template <typename Scalar>
Scalar forecast(const CbsLawFit<Scalar>& fit, Scalar scale) {
  if (!(scale > Scalar(0)))
    throw std::invalid_argument("scale must be positive");
  return fit.constant + fit.coefficient * std::pow(scale, fit.exponent);
}

/// Steps that process a token budget proportional to model size:
/// ratio * n_params / (ctx_len * batch), rounded to nearest.
inline std::int64_t chinchilla_steps(double n_params, double batch_size,
                                     double ctx_len, double ratio) {
  if (!(n_params > 0) || !(batch_size > 0) || !(ctx_len > 0) || !(ratio > 0))
    throw std::invalid_argument("all chinchilla-step inputs must be positive");
  return std::llround(ratio * n_params / (ctx_len * batch_size));
}

/// Normalizes step counts by the count at the reference batch size.
template <typename Scalar>
std::vector<std::pair<std::int64_t, Scalar>> relative_steps(
    std::span<const StepObservation<Scalar>> obs,
    std::int64_t reference_batch) {
  detail::validate_step_obs(obs);
  const StepObservation<Scalar>* ref = nullptr;
  for (const auto& o : obs) {
    if (o.batch_size == reference_batch) {
      ref = &o;
      break;
    }
  }
  if (ref == nullptr)
    throw std::invalid_argument("reference batch size not among observations");
  std::vector<std::pair<std::int64_t, Scalar>> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.emplace_back(o.batch_size, o.steps / ref->steps);
  return out;
}

}  // namespace cbslab
