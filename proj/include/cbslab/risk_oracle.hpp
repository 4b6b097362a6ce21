#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cbslab/spectral_problem.hpp"

namespace cbslab {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Choice of fourth-moment model for the covariance recursions.
///
/// exact_gaussian uses E[G A G] = HAH + (HAH + tr(HA) H)/B, which is exact
/// for the empirical covariance G of B independent Gaussian covariates
/// (from E[x x' A x x'] = 2 HAH + tr(HA) H). paper_operator instead models
/// the batch correction as (2/B) tr(HA) H alone, dropping the HAH/B term;
/// the two differ only in O(1/B) constants.
enum class MomentMode { exact_gaussian, paper_operator };

inline const char* to_string(MomentMode m) {
  return m == MomentMode::exact_gaussian ? "exact-gaussian" : "paper-operator";
}

template <typename Scalar = double>
struct RiskBreakdown {
  Scalar bias{};
  Scalar variance{};
  Scalar total_excess{};  // bias + variance
  Eigen::Index kstar = 0;
  MomentMode moment_mode = MomentMode::exact_gaussian;
};

/// Largest k (1-based) with eigenvalue_k >= batch / (data * gamma); 0 if
/// even the top eigenvalue is below the threshold. Splits the spectrum
/// into contracting head and noise-limited tail directions.
template <typename Scalar>
Eigen::Index kstar(const VectorX<Scalar>& eigenvalues, std::int64_t data_size,
                   Scalar gamma, std::int64_t batch_size) {
  const Scalar threshold = static_cast<Scalar>(batch_size) /
                           (static_cast<Scalar>(data_size) * gamma);
  const auto* begin = eigenvalues.data();
  const auto* end = begin + eigenvalues.size();
  // eigenvalues are nonincreasing, so the qualifying prefix is contiguous
  const auto* first_below = std::partition_point(
      begin, end, [&](Scalar v) { return v >= threshold; });
  return static_cast<Eigen::Index>(first_below - begin);
}

/// Largest stable constant step size for a given batch size:
///   gamma_max = c_stab * min{ B / tr(H), 1 / lambda_1 },  c_stab = 1/2.
/// The 1/2 keeps every per-coordinate contraction factor strictly inside
/// (-1, 1) including the batch fourth-moment correction.
template <typename Scalar>
Scalar stability_margin(const SpectralProblem<Scalar>& problem,
                        std::int64_t batch_size) {
  constexpr Scalar c_stab = Scalar(1) / Scalar(2);
  const Scalar by_trace =
      static_cast<Scalar>(batch_size) / problem.trace();
  const Scalar by_curvature = Scalar(1) / problem.top_eigenvalue();
  return c_stab * std::min(by_trace, by_curvature);
}

/// Two-sided excess-risk scale for the averaged iterate:
///   (B/(D g))^2 sum_{i<=k*} (w0-w*)_i^2 / l_i
///   + sum_{i>k*} l_i (w0-w*)_i^2
///   + s^2 (k* + (D g/B)^2 sum_{i>k*} l_i^2) / D.
/// Pure formula evaluation; depends on gamma and batch only through their
/// ratio.
template <typename Scalar>
Scalar theorem2_bound(const SpectralProblem<Scalar>& problem,
                      std::int64_t data_size, Scalar gamma,
                      std::int64_t batch_size) {
  if (data_size < 1 || batch_size < 1)
    throw std::invalid_argument("data and batch sizes must be >= 1");
  if (!(gamma > Scalar(0)))
    throw std::invalid_argument("gamma must be positive");
  const Eigen::Index d = problem.dim();
  const Eigen::Index k = kstar(problem.eigenvalues, data_size, gamma,
                               batch_size);
  const Scalar ratio = static_cast<Scalar>(batch_size) /
                       (static_cast<Scalar>(data_size) * gamma);
  Scalar head{}, tail{}, tail_sq{};
  for (Eigen::Index i = 0; i < d; ++i) {
    const Scalar l = problem.eigenvalues[i];
    const Scalar diff = problem.init_coeffs[i] - problem.target_coeffs[i];
    if (i < k) {
      head += diff * diff / l;
    } else {
      tail += l * diff * diff;
      tail_sq += l * l;
    }
  }
  const Scalar bias = ratio * ratio * head + tail;
  const Scalar variance =
      problem.noise_variance *
      (static_cast<Scalar>(k) + tail_sq / (ratio * ratio)) /
      static_cast<Scalar>(data_size);
  return bias + variance;
}

/// Diagonal of E[G A G] for G the empirical covariance of a size-B batch
/// of N(0, diag(eigenvalues)) covariates and A = diag(a_diag).
template <typename Scalar>
VectorX<Scalar> fourth_moment_diag(const VectorX<Scalar>& eigenvalues,
                                   const VectorX<Scalar>& a_diag,
                                   std::int64_t batch_size, MomentMode mode) {
  if (eigenvalues.size() != a_diag.size())
    throw std::invalid_argument("eigenvalue/diagonal length mismatch");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch_size);
  const auto l = eigenvalues.array();
  const auto a = a_diag.array();
  const Scalar trace_ha = (l * a).sum();
  if (mode == MomentMode::exact_gaussian) {
    return ((Scalar(1) + inv_b) * l.square() * a + inv_b * trace_ha * l)
        .matrix();
  }
  return (l.square() * a + Scalar(2) * inv_b * trace_ha * l).matrix();
}

/// Diagonals of the centered second-moment iterates of the SGD error, in
/// the eigenbasis: bias_diag tracks the initialization-driven component,
/// variance_diag the noise-driven one. Both stay nonnegative under the
/// one-step map, whose coefficients are all nonnegative.
template <typename Scalar = double>
struct CovState {
  ArrayX<Scalar> bias_diag;
  ArrayX<Scalar> variance_diag;
  std::int64_t step = 0;
};

template <typename Scalar>
CovState<Scalar> init_cov_state(const SpectralProblem<Scalar>& problem) {
  CovState<Scalar> state;
  state.bias_diag =
      (problem.init_coeffs - problem.target_coeffs).array().square();
  state.variance_diag = ArrayX<Scalar>::Zero(problem.dim());
  state.step = 0;
  return state;
}

/// Advances both covariance diagonals by one SGD step:
///   u_i <- q_i u_i + c * l_i * sum_j l_j u_j      (+ g^2 s^2 l_i / B on
///                                                  the variance part)
/// with q_i = (1-g l_i)^2 + g^2 l_i^2 / B, c = g^2/B   (exact_gaussian)
///      q_i = (1-g l_i)^2,                c = 2 g^2/B  (paper_operator).
template <typename Scalar>
void advance_cov_state(const SpectralProblem<Scalar>& problem,
                       CovState<Scalar>& state, Scalar gamma,
                       std::int64_t batch_size, MomentMode mode) {
  const auto l = problem.eigenvalues.array();
  const Scalar g2_over_b =
      gamma * gamma / static_cast<Scalar>(batch_size);
  const ArrayX<Scalar> contraction = (Scalar(1) - gamma * l).square();
  ArrayX<Scalar> quad;
  Scalar trace_coef;
  if (mode == MomentMode::exact_gaussian) {
    quad = contraction + g2_over_b * l.square();
    trace_coef = g2_over_b;
  } else {
    quad = contraction;
    trace_coef = Scalar(2) * g2_over_b;
  }
  const Scalar trace_bias = (l * state.bias_diag).sum();
  const Scalar trace_var = (l * state.variance_diag).sum();
  state.bias_diag = quad * state.bias_diag + (trace_coef * trace_bias) * l;
  state.variance_diag = quad * state.variance_diag +
                        (trace_coef * trace_var) * l +
                        (g2_over_b * problem.noise_variance) * l;
  ++state.step;
}

/// Exact expected excess risk of the averaged iterate of single-pass
/// mini-batch SGD, without sampling.
///
/// Runs the diagonal covariance recursions for n = D/B steps and reduces
/// the full double sum (1/n^2) sum_{s,t} <H, E[e_s (x) e_t]> per
/// coordinate, using E[e_t (x) e_s] = (I - g H)^{t-s} Cov_s for t >= s.
/// With r = 1 - g l and the running sums A = sum_s u_s and
/// T = sum_s u_s r^{n-1-s}, each coordinate contributes
///   ((1+r) A - 2 r T) / g,
/// the closed form of sum_s u_s (1 + 2 sum_{u=1}^{n-1-s} r^u). When
/// g l < 1e-14 the geometric sum is taken as its series limit m, via
/// W = sum_s u_s (n-1-s), to avoid dividing by g l.
///
/// Cost is O(n d); rejects configurations above max_cost (d * n).
template <typename Scalar>
RiskBreakdown<Scalar> exact_excess_risk(
    const SpectralProblem<Scalar>& problem, std::int64_t data_size,
    Scalar gamma, std::int64_t batch_size,
    MomentMode mode = MomentMode::exact_gaussian, double max_cost = 4e9) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (data_size < batch_size || data_size % batch_size != 0)
    throw std::invalid_argument(
        "data size must be a positive multiple of the batch size");
  if (!(gamma > Scalar(0)))
    throw std::invalid_argument("gamma must be positive");
  if (Scalar(1) - gamma * problem.top_eigenvalue() <= Scalar(-1))
    throw std::invalid_argument("gamma * lambda_1 >= 2: recursion diverges");
  const Scalar margin = stability_margin(problem, batch_size);
  if (gamma > margin * (Scalar(1) + Scalar(1e-9)))
    throw std::invalid_argument("gamma exceeds the stability margin");

  const std::int64_t n_steps = data_size / batch_size;
  const Eigen::Index d = problem.dim();
  if (static_cast<double>(n_steps) * static_cast<double>(d) > max_cost)
    throw std::invalid_argument("d * n exceeds the oracle compute budget");

  const auto l = problem.eigenvalues.array();
  const ArrayX<Scalar> r = Scalar(1) - gamma * l;

  CovState<Scalar> cov = init_cov_state(problem);
  ArrayX<Scalar> sum_b = ArrayX<Scalar>::Zero(d);
  ArrayX<Scalar> sum_v = ArrayX<Scalar>::Zero(d);
  ArrayX<Scalar> geo_b = ArrayX<Scalar>::Zero(d);
  ArrayX<Scalar> geo_v = ArrayX<Scalar>::Zero(d);
  ArrayX<Scalar> wgt_b = ArrayX<Scalar>::Zero(d);
  ArrayX<Scalar> wgt_v = ArrayX<Scalar>::Zero(d);

  for (std::int64_t s = 0; s < n_steps; ++s) {
    sum_b += cov.bias_diag;
    sum_v += cov.variance_diag;
    geo_b = r * geo_b + cov.bias_diag;
    geo_v = r * geo_v + cov.variance_diag;
    const Scalar sw = static_cast<Scalar>(s);
    wgt_b += sw * cov.bias_diag;
    wgt_v += sw * cov.variance_diag;
    if (s + 1 < n_steps)
      advance_cov_state(problem, cov, gamma, batch_size, mode);
  }

  const Scalar inv_n2 = Scalar(1) / (static_cast<Scalar>(n_steps) *
                                     static_cast<Scalar>(n_steps));
  Scalar bias{}, variance{};
  for (Eigen::Index i = 0; i < d; ++i) {
    const Scalar gl = gamma * l[i];
    if (gl >= Scalar(1e-14)) {
      bias += ((Scalar(1) + r[i]) * sum_b[i] - Scalar(2) * r[i] * geo_b[i]) /
              gamma;
      variance +=
          ((Scalar(1) + r[i]) * sum_v[i] - Scalar(2) * r[i] * geo_v[i]) /
          gamma;
    } else {
      const Scalar last = static_cast<Scalar>(n_steps - 1);
      bias += l[i] * (sum_b[i] + Scalar(2) * (last * sum_b[i] - wgt_b[i]));
      variance +=
          l[i] * (sum_v[i] + Scalar(2) * (last * sum_v[i] - wgt_v[i]));
    }
  }

  RiskBreakdown<Scalar> out;
  out.bias = bias * inv_n2;
  out.variance = variance * inv_n2;
  out.total_excess = out.bias + out.variance;
  out.kstar = kstar(problem.eigenvalues, data_size, gamma, batch_size);
  out.moment_mode = mode;
  return out;
}

/// Batch-size exponent of the diminishing-returns transition for a
/// power-law problem: 0 when b <= a (bias-dominated, best batch is 1),
/// otherwise 1 - a / min{b, 2a+1}.
template <typename Scalar>
Scalar cbs_exponent(Scalar a, Scalar b) {
  if (!(a > Scalar(1)) || !(b > Scalar(1)))
    throw std::invalid_argument("exponents must satisfy a > 1, b > 1");
  if (b <= a) return Scalar(0);
  return Scalar(1) - a / std::min(b, Scalar(2) * a + Scalar(1));
}

template <typename Scalar = double>
struct BatchRiskPoint {
  std::int64_t batch_size = 0;
  Scalar best_gamma{};
  Scalar min_excess_risk{};
};

template <typename Scalar = double>
struct OracleCbsResult {
  std::int64_t critical_batch = 0;
  std::vector<BatchRiskPoint<Scalar>> table;  // one row per feasible batch
};

/// Oracle-derived critical batch size at data budget D: for each batch in
/// the grid, minimizes the exact excess risk over the feasible step sizes
/// (those within the stability margin for that batch), then returns the
/// largest batch whose minimum stays within (1 + overhead) of the best
/// minimum across all batches. A batch that does not divide D is evaluated
/// at the nearest achievable budget n * B with n = round(D / B), so the
/// grid is not restricted to divisors of D.
template <typename Scalar>
OracleCbsResult<Scalar> oracle_cbs(const SpectralProblem<Scalar>& problem,
                                   std::int64_t data_size, Scalar overhead,
                                   const std::vector<std::int64_t>& batch_grid,
                                   const std::vector<Scalar>& gamma_grid,
                                   MomentMode mode = MomentMode::exact_gaussian,
                                   double max_cost = 4e9) {
  if (batch_grid.empty() || gamma_grid.empty())
    throw std::invalid_argument("batch and gamma grids must be nonempty");
  if (!(overhead > Scalar(0)))
    throw std::invalid_argument("overhead must be positive");

  OracleCbsResult<Scalar> result;
  for (std::int64_t batch : batch_grid) {
    if (batch < 1 || batch > data_size)
      throw std::invalid_argument("batch grid entries must lie in [1, D]");
    const std::int64_t n_steps =
        std::max<std::int64_t>(1, (data_size + batch / 2) / batch);
    const std::int64_t budget = n_steps * batch;
    const Scalar margin = stability_margin(problem, batch);
    BatchRiskPoint<Scalar> point;
    point.batch_size = batch;
    point.min_excess_risk = std::numeric_limits<Scalar>::infinity();
    bool feasible = false;
    for (Scalar gamma : gamma_grid) {
      if (!(gamma > Scalar(0)) || gamma > margin) continue;
      const auto risk =
          exact_excess_risk(problem, budget, gamma, batch, mode, max_cost);
      feasible = true;
      if (risk.total_excess < point.min_excess_risk) {
        point.min_excess_risk = risk.total_excess;
        point.best_gamma = gamma;
      }
    }
    if (feasible) result.table.push_back(point);
  }
  if (result.table.empty())
    throw std::runtime_error("no batch size has a feasible step size");

  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (const auto& p : result.table) best = std::min(best, p.min_excess_risk);
  const Scalar cutoff = (Scalar(1) + overhead) * best;
  for (const auto& p : result.table) {
    if (p.min_excess_risk <= cutoff)
      result.critical_batch = std::max(result.critical_batch, p.batch_size);
  }
  return result;
}

}  // namespace cbslab
