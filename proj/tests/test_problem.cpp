#include <cmath>

#include "cbslab/spectral_problem.hpp"
#include "doctest.h"

using cbslab::Batch;
using cbslab::GaussianStream;
using cbslab::build_powerlaw_problem;
using cbslab::make_problem;
using cbslab::population_risk;
using cbslab::sample_batch;
using Eigen::VectorXd;

TEST_CASE("power-law construction matches the target spectrum") {
  const auto p = build_powerlaw_problem<double>(4, 2.0, 3.0, 1.0);
  CHECK(p.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(p.eigenvalues[1] == doctest::Approx(0.25));
  CHECK(p.eigenvalues[2] == doctest::Approx(1.0 / 9.0));
  CHECK(p.eigenvalues[3] == doctest::Approx(1.0 / 16.0));
  CHECK(p.target_coeffs[0] == doctest::Approx(1.0));
  CHECK(p.init_coeffs.isZero());

  const auto p10 = build_powerlaw_problem<double>(10, 2.0, 3.0, 1.0);
  CHECK(p10.eigenvalues[9] == doctest::Approx(0.01));
  const double energy =
      p10.eigenvalues[9] * p10.target_coeffs[9] * p10.target_coeffs[9];
  CHECK(energy == doctest::Approx(0.001));
}

TEST_CASE("construction rejects out-of-range exponents") {
  CHECK_THROWS_AS(build_powerlaw_problem<double>(4, 1.0, 3.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_powerlaw_problem<double>(4, 2.0, 1.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_powerlaw_problem<double>(0, 2.0, 3.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_powerlaw_problem<double>(4, 2.0, 3.0, -1.0),
                  std::invalid_argument);
}

TEST_CASE("eigenvalue ratios follow the power law to 1e-12") {
  for (double a : {1.5, 2.0, 3.0}) {
    const auto p = build_powerlaw_problem<double>(64, a, a + 1.0, 0.5);
    for (Eigen::Index i = 0; i + 1 < p.dim(); ++i) {
      const double expected =
          std::pow(static_cast<double>(i + 2) / static_cast<double>(i + 1), a);
      const double ratio = p.eigenvalues[i] / p.eigenvalues[i + 1];
      CHECK(ratio == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("noise-free zero target gives zero responses") {
  auto p = make_problem<double>(VectorXd::Constant(3, 1.0),
                                VectorXd::Zero(3), 0.0);
  GaussianStream<double> rng(7);
  const auto batch = sample_batch(p, 16, rng);
  CHECK(batch.responses.isZero());
}

TEST_CASE("identical seeds give identical batches") {
  const auto p = build_powerlaw_problem<double>(5, 2.0, 3.0, 1.0);
  GaussianStream<double> rng_a(123), rng_b(123);
  const auto a = sample_batch(p, 9, rng_a);
  const auto b = sample_batch(p, 9, rng_b);
  CHECK(a.covariates == b.covariates);
  CHECK(a.responses == b.responses);
}

TEST_CASE("a batch consumes exactly size * (dim + 1) variates") {
  const auto p = build_powerlaw_problem<double>(6, 2.0, 3.0, 1.0);
  GaussianStream<double> rng(5);
  (void)sample_batch(p, 17, rng);
  CHECK(rng.variates() == 17u * 7u);
}

TEST_CASE("empirical covariance matches the spectrum") {
  VectorXd lambda(2);
  lambda << 1.0, 0.25;
  VectorXd target(2);
  target << 1.0, 2.0;
  const auto p = make_problem<double>(lambda, target, 1.0);
  GaussianStream<double> rng(2024);
  const Eigen::Index n = 1'000'000;
  Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
  Batch<double> batch;
  batch.covariates.resize(10'000, 2);
  batch.responses.resize(10'000);
  for (int chunk = 0; chunk < 100; ++chunk) {
    cbslab::sample_batch_into(p, rng, batch);
    second += batch.covariates.transpose() * batch.covariates;
  }
  second /= static_cast<double>(n);
  CHECK(second(0, 0) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(second(1, 1) == doctest::Approx(0.25).epsilon(0.04));
  CHECK(std::abs(second(0, 1)) < 0.01);
}

TEST_CASE("population risk: minimizer, zero iterate, hand value") {
  const auto p = build_powerlaw_problem<double>(32, 2.0, 3.0, 1.0);
  CHECK(population_risk(p, p.target_coeffs) == doctest::Approx(1.0));

  double tail = 0.0;
  for (int i = 1; i <= 32; ++i) tail += std::pow(i, -3.0);
  CHECK(population_risk(p, VectorXd::Zero(32)) ==
        doctest::Approx(1.0 + tail).epsilon(1e-12));

  VectorXd lambda(2), target(2);
  lambda << 1.0, 0.25;
  target << 1.0, 2.0;
  const auto q = make_problem<double>(lambda, target, 1.0);
  CHECK(population_risk(q, VectorXd::Zero(2)) == doctest::Approx(3.0));

  CHECK_THROWS_AS(population_risk(p, VectorXd::Zero(5)),
                  std::invalid_argument);
}

TEST_CASE("population risk is at least the noise floor") {
  const auto p = build_powerlaw_problem<double>(8, 2.0, 4.0, 0.3);
  GaussianStream<double> rng(99);
  for (int rep = 0; rep < 200; ++rep) {
    VectorXd w(8);
    for (int i = 0; i < 8; ++i) w[i] = rng();
    CHECK(population_risk(p, w) >= 0.3);
  }
  CHECK(population_risk(p, p.target_coeffs) == doctest::Approx(0.3));
}

TEST_CASE("monte carlo loss agrees with the population risk") {
  const auto p = build_powerlaw_problem<double>(4, 2.0, 3.0, 0.5);
  VectorXd w(4);
  w << 0.5, -0.25, 1.0, 0.0;
  const double expected = population_risk(p, w);

  GaussianStream<double> rng(31);
  const Eigen::Index n = 200'000;
  double sum = 0.0, sum_sq = 0.0;
  Batch<double> batch;
  batch.covariates.resize(10'000, 4);
  batch.responses.resize(10'000);
  for (int chunk = 0; chunk < 20; ++chunk) {
    cbslab::sample_batch_into(p, rng, batch);
    const VectorXd residual = batch.covariates * w - batch.responses;
    sum += residual.array().square().sum();
    sum_sq += residual.array().square().square().sum();
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const double se = std::sqrt(var / n);
  CHECK(std::abs(mean - expected) < 3.0 * se);
}

TEST_CASE("scalar genericity: float instantiation builds and samples") {
  const auto p = build_powerlaw_problem<float>(4, 2.0f, 3.0f, 1.0f);
  GaussianStream<float> rng(1);
  const auto batch = sample_batch(p, 3, rng);
  CHECK(batch.covariates.rows() == 3);
  CHECK(population_risk(p, p.target_coeffs) == doctest::Approx(1.0f));
}
