#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cbslab/parallel.hpp"
#include "cbslab/random.hpp"
#include "cbslab/spectral_problem.hpp"

namespace cbslab {

template <typename Scalar = double>
struct SGDConfig {
  std::int64_t batch_size = 1;
  Scalar learning_rate{};
  std::int64_t data_size = 0;  // total samples; single pass
  std::uint64_t seed = 0;
  bool record_trajectory = false;
};

template <typename Scalar = double>
struct SGDRun {
  VectorX<Scalar> final_iterate;
  VectorX<Scalar> averaged_iterate;  // mean of iterates 0..n-1 (includes w0)
  bool diverged = false;
  std::int64_t divergence_step = -1;  // first step with a non-finite iterate
  std::vector<VectorX<Scalar>> trajectory;
};

/// Single-pass mini-batch SGD on a spectral problem:
///   w <- w - (lr / B) * sum_j (x_j . w - y_j) x_j
/// over n = data_size / batch_size disjoint consecutive batches.
/// The returned average spans iterates 0..n-1: it includes the initial
/// point and excludes the final one. Deterministic given the seed.
template <typename Scalar>
SGDRun<Scalar> run_minibatch_sgd(const SpectralProblem<Scalar>& problem,
                                 const SGDConfig<Scalar>& cfg) {
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(cfg.learning_rate > Scalar(0)))
    throw std::invalid_argument("learning rate must be positive");
  if (cfg.data_size < cfg.batch_size || cfg.data_size % cfg.batch_size != 0)
    throw std::invalid_argument(
        "data size must be a positive multiple of the batch size");

  const std::int64_t n_steps = cfg.data_size / cfg.batch_size;
  const Eigen::Index batch = static_cast<Eigen::Index>(cfg.batch_size);
  const Eigen::Index d = problem.dim();

  GaussianStream<Scalar> rng(cfg.seed);
  Batch<Scalar> scratch;
  scratch.covariates.resize(batch, d);
  scratch.responses.resize(batch);
  VectorX<Scalar> residual(batch);

  SGDRun<Scalar> run;
  VectorX<Scalar> w = problem.init_coeffs;
  VectorX<Scalar> sum = VectorX<Scalar>::Zero(d);
  if (cfg.record_trajectory) run.trajectory.push_back(w);

  const Scalar step_scale = cfg.learning_rate / static_cast<Scalar>(batch);
  for (std::int64_t t = 0; t < n_steps; ++t) {
    sum += w;
    sample_batch_into(problem, rng, scratch);
    residual.noalias() = scratch.covariates * w - scratch.responses;
    w.noalias() -= step_scale * (scratch.covariates.transpose() * residual);
    if (cfg.record_trajectory) run.trajectory.push_back(w);
    if (!w.allFinite()) {
      run.diverged = true;
      run.divergence_step = t;
      break;
    }
  }
  run.final_iterate = std::move(w);
  run.averaged_iterate = sum / static_cast<Scalar>(n_steps);
  return run;
}

template <typename Scalar = double>
struct McRisk {
  Scalar mean{};            // mean excess risk of the averaged iterate
  Scalar standard_error{};  // over the surviving replicas
  std::int64_t replicas = 0;
  std::int64_t diverged_replicas = 0;
};

/// Monte Carlo excess risk over `reps` independent replicas seeded
/// seed, seed+1, ... Replicas may run concurrently; the reduction is in
/// seed order, so the result does not depend on the job count. Diverged
/// replicas are counted and excluded from the mean.
template <typename Scalar>
McRisk<Scalar> mc_excess_risk(const SpectralProblem<Scalar>& problem,
                              const SGDConfig<Scalar>& cfg, std::int64_t reps,
                              int jobs = 0) {
  if (reps < 2) throw std::invalid_argument("need at least 2 replicas");
  std::vector<Scalar> risk(reps);
  std::vector<char> diverged(reps, 0);
  parallel_for(reps, jobs, [&](std::int64_t k) {
    SGDConfig<Scalar> local = cfg;
    local.seed = cfg.seed + static_cast<std::uint64_t>(k);
    local.record_trajectory = false;
    const auto run = run_minibatch_sgd(problem, local);
    if (run.diverged) {
      diverged[k] = 1;
    } else {
      risk[k] = excess_risk(problem, run.averaged_iterate);
    }
  });

  McRisk<Scalar> out;
  out.replicas = reps;
  Scalar sum{};
  std::int64_t kept = 0;
  for (std::int64_t k = 0; k < reps; ++k) {
    if (diverged[k]) {
      ++out.diverged_replicas;
    } else {
      sum += risk[k];
      ++kept;
    }
  }
  if (kept == 0) {
    out.mean = std::numeric_limits<Scalar>::quiet_NaN();
    out.standard_error = std::numeric_limits<Scalar>::quiet_NaN();
    return out;
  }
  out.mean = sum / static_cast<Scalar>(kept);
  Scalar sq{};
  for (std::int64_t k = 0; k < reps; ++k) {
    if (!diverged[k]) {
      const Scalar dev = risk[k] - out.mean;
      sq += dev * dev;
    }
  }
  out.standard_error =
      kept > 1 ? std::sqrt(sq / (static_cast<Scalar>(kept) *
                                 static_cast<Scalar>(kept - 1)))
               : Scalar(0);
  return out;
}

}  // namespace cbslab
