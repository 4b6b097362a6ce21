#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "cbslab/random.hpp"

namespace cbslab {

template <typename Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Gaussian linear-regression instance in the eigenbasis of its covariate
/// covariance: x ~ N(0, diag(eigenvalues)), y | x ~ N(x . target_coeffs,
/// noise_variance). Immutable after construction; safe to share across
/// concurrent runs.
template <typename Scalar = double>
struct SpectralProblem {
  using Vector = VectorX<Scalar>;

  Vector eigenvalues;      // strictly positive, nonincreasing
  Vector target_coeffs;    // minimizer of the population risk
  Vector init_coeffs;      // iterate at step 0
  Vector covariate_scale;  // sqrt(eigenvalues), cached for sampling
  Scalar noise_variance{};
  Scalar capacity_exponent{};  // 0 unless built as a power-law instance
  Scalar source_exponent{};

  Eigen::Index dim() const { return eigenvalues.size(); }
  Scalar trace() const { return eigenvalues.sum(); }
  Scalar top_eigenvalue() const { return eigenvalues[0]; }
};

/// A block of samples: one covariate row and one response per sample.
template <typename Scalar = double>
struct Batch {
  MatrixX<Scalar> covariates;  // batch_size x dim
  VectorX<Scalar> responses;   // batch_size

  Eigen::Index size() const { return responses.size(); }
};

/// Builds a problem from explicit spectrum and target, validating the
/// spectral invariants. init defaults to the zero vector.
template <typename Scalar>
SpectralProblem<Scalar> make_problem(VectorX<Scalar> eigenvalues,
                                     VectorX<Scalar> target_coeffs,
                                     Scalar noise_variance,
                                     VectorX<Scalar> init_coeffs = {}) {
  const Eigen::Index d = eigenvalues.size();
  if (d < 1) throw std::invalid_argument("problem dimension must be >= 1");
  if (target_coeffs.size() != d)
    throw std::invalid_argument("target coefficient length != dimension");
  if (noise_variance < Scalar(0))
    throw std::invalid_argument("noise variance must be nonnegative");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(eigenvalues[i] > Scalar(0)))
      throw std::invalid_argument("eigenvalues must be strictly positive");
    if (i > 0 && eigenvalues[i] > eigenvalues[i - 1])
      throw std::invalid_argument("eigenvalues must be nonincreasing");
  }
  if (init_coeffs.size() == 0) init_coeffs = VectorX<Scalar>::Zero(d);
  if (init_coeffs.size() != d)
    throw std::invalid_argument("init coefficient length != dimension");

  SpectralProblem<Scalar> p;
  p.eigenvalues = std::move(eigenvalues);
  p.target_coeffs = std::move(target_coeffs);
  p.init_coeffs = std::move(init_coeffs);
  p.covariate_scale = p.eigenvalues.array().sqrt().matrix();
  p.noise_variance = noise_variance;
  return p;
}

/// Power-law instance: eigenvalue_i = i^-a and eigenvalue_i * target_i^2
/// = i^-b exactly (target_i = i^((a-b)/2), all positive). Requires a > 1
/// (summable trace) and b > 1.
template <typename Scalar = double>
SpectralProblem<Scalar> build_powerlaw_problem(Eigen::Index d, Scalar a,
                                               Scalar b,
                                               Scalar noise_variance) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  if (!(a > Scalar(1)))
    throw std::invalid_argument("capacity exponent a must be > 1");
  if (!(b > Scalar(1)))
    throw std::invalid_argument("source exponent b must be > 1");
  VectorX<Scalar> lambda(d), target(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Scalar idx = static_cast<Scalar>(i + 1);
    lambda[i] = std::pow(idx, -a);
    target[i] = std::pow(idx, (a - b) / Scalar(2));
  }
  auto p = make_problem(std::move(lambda), std::move(target), noise_variance);
  p.capacity_exponent = a;
  p.source_exponent = b;
  return p;
}

/// Fills `out` (pre-sized to batch_size x dim) with fresh samples.
/// Draw order is fixed: for each sample, dim covariate variates followed
/// by one response variate, so a run consumes exactly
/// batch_size * (dim + 1) variates per batch.
template <typename Scalar>
void sample_batch_into(const SpectralProblem<Scalar>& problem,
                       GaussianStream<Scalar>& rng, Batch<Scalar>& out) {
  const Eigen::Index d = problem.dim();
  const Eigen::Index rows = out.covariates.rows();
  if (out.covariates.cols() != d || out.responses.size() != rows)
    throw std::invalid_argument("batch buffers not sized for this problem");
  const Scalar noise_scale = std::sqrt(problem.noise_variance);
  for (Eigen::Index r = 0; r < rows; ++r) {
    Scalar dot{};
    for (Eigen::Index j = 0; j < d; ++j) {
      const Scalar x = problem.covariate_scale[j] * rng();
      out.covariates(r, j) = x;
      dot += x * problem.target_coeffs[j];
    }
    out.responses[r] = dot + noise_scale * rng();
  }
}

template <typename Scalar>
Batch<Scalar> sample_batch(const SpectralProblem<Scalar>& problem,
                           Eigen::Index batch_size,
                           GaussianStream<Scalar>& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  Batch<Scalar> out;
  out.covariates.resize(batch_size, problem.dim());
  out.responses.resize(batch_size);
  sample_batch_into(problem, rng, out);
  return out;
}

/// Population risk R(w) = sum_i eigenvalue_i (w_i - target_i)^2 +
/// noise_variance; minimized at the target with value noise_variance.
template <typename Scalar, typename Derived>
Scalar population_risk(const SpectralProblem<Scalar>& problem,
                       const Eigen::MatrixBase<Derived>& w) {
  if (w.size() != problem.dim())
    throw std::invalid_argument("iterate length != problem dimension");
  const auto diff = (w - problem.target_coeffs).array();
  return (problem.eigenvalues.array() * diff.square()).sum() +
         problem.noise_variance;
}

/// R(w) - noise_variance, the part the optimizer can remove.
template <typename Scalar, typename Derived>
Scalar excess_risk(const SpectralProblem<Scalar>& problem,
                   const Eigen::MatrixBase<Derived>& w) {
  return population_risk(problem, w) - problem.noise_variance;
}

}  // namespace cbslab
