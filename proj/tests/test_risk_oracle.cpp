#include <cmath>
#include <vector>

#include "cbslab/minibatch_sgd.hpp"
#include "cbslab/risk_oracle.hpp"
#include "doctest.h"

using cbslab::CovState;
using cbslab::MomentMode;
using cbslab::build_powerlaw_problem;
using cbslab::cbs_exponent;
using cbslab::exact_excess_risk;
using cbslab::fourth_moment_diag;
using cbslab::kstar;
using cbslab::make_problem;
using cbslab::oracle_cbs;
using cbslab::stability_margin;
using cbslab::theorem2_bound;
using Eigen::VectorXd;

namespace {

VectorXd powerlaw_eigenvalues(int d, double a) {
  VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = std::pow(i + 1, -a);
  return v;
}

}  // namespace

TEST_CASE("kstar counts the eigenvalues above the ratio threshold") {
  const VectorXd lambda = powerlaw_eigenvalues(64, 2.0);
  // threshold 0.01: k^-2 >= 0.01 up to k = 10
  CHECK(kstar<double>(lambda, 100, 1.0, 1) == 10);
  // threshold above the top eigenvalue: empty head
  CHECK(kstar<double>(lambda, 1, 2.0, 4) == 0);
  // threshold below the smallest: every index qualifies
  CHECK(kstar<double>(lambda, 1'000'000, 1.0, 1) == 64);
}

TEST_CASE("kstar is nondecreasing in D gamma / B") {
  const VectorXd lambda = powerlaw_eigenvalues(32, 2.0);
  Eigen::Index prev = 0;
  for (std::int64_t data = 16; data <= 1 << 20; data *= 2) {
    const Eigen::Index k = kstar<double>(lambda, data, 0.25, 4);
    CHECK(k >= prev);
    prev = k;
  }
}

TEST_CASE("stability margin: binding term switches with batch size") {
  VectorXd one(1);
  one << 1.0;
  const auto tiny = make_problem<double>(one, VectorXd::Zero(1), 0.0);
  CHECK(stability_margin(tiny, 1) == doctest::Approx(0.5));

  // trace 10 with top eigenvalue 1
  VectorXd lambda = VectorXd::Constant(10, 1.0);
  const auto flat = make_problem<double>(lambda, VectorXd::Zero(10), 0.0);
  CHECK(stability_margin(flat, 1) == doctest::Approx(1.0 / 20.0));
  CHECK(stability_margin(flat, 100) == doctest::Approx(0.5));
}

TEST_CASE("theorem-2 bound: hand-evaluated two-dimensional case") {
  VectorXd lambda(2), target(2);
  lambda << 1.0, 0.25;
  target << 1.0, 1.0;  // init = 0, so the offset is (1, 1)
  const auto p = make_problem<double>(lambda, target, 1.0);
  const double value = theorem2_bound(p, 100, 1.0, 1);
  CHECK(value == doctest::Approx(0.0205).epsilon(1e-12));
}

TEST_CASE("theorem-2 bound: pure-variance case is noise * d / D") {
  auto p = build_powerlaw_problem<double>(16, 2.0, 3.0, 2.0);
  p.init_coeffs = p.target_coeffs;
  // large D gamma / B puts every eigenvalue in the head
  const double value = theorem2_bound(p, 1 << 16, 0.4, 1);
  CHECK(kstar(p.eigenvalues, 1 << 16, 0.4, std::int64_t{1}) == 16);
  CHECK(value == doctest::Approx(2.0 * 16 / (1 << 16)).epsilon(1e-12));
}

TEST_CASE("theorem-2 bound depends on batch and gamma only via the ratio") {
  const auto p = build_powerlaw_problem<double>(32, 2.0, 3.0, 1.0);
  const double base = theorem2_bound(p, 4096, 0.125, 2);
  for (int k = 1; k <= 4; ++k) {
    const double scaled =
        theorem2_bound(p, 4096, 0.125 * (1 << k), 2 << k);
    CHECK(scaled == base);  // power-of-two scaling is exact in binary fp
  }
  CHECK(theorem2_bound(p, 4096, 3.0 * 0.125, 6) ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("fourth moment: identity inputs reproduce (d + 2) H") {
  VectorXd lambda = VectorXd::Constant(2, 1.0);
  VectorXd a_diag = VectorXd::Constant(2, 1.0);
  const VectorXd exact =
      fourth_moment_diag(lambda, a_diag, 1, MomentMode::exact_gaussian);
  CHECK(exact[0] == doctest::Approx(4.0));
  CHECK(exact[1] == doctest::Approx(4.0));
}

TEST_CASE("fourth moment: both modes concentrate to H A H as B grows") {
  VectorXd lambda(3), a_diag(3);
  lambda << 1.0, 0.5, 0.25;
  a_diag << 1.0, 2.0, 3.0;
  const VectorXd haH =
      (lambda.array().square() * a_diag.array()).matrix();
  for (auto mode : {MomentMode::exact_gaussian, MomentMode::paper_operator}) {
    const VectorXd big = fourth_moment_diag(lambda, a_diag, 1 << 30, mode);
    CHECK((big - haH).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("fourth moment: exact mode matches a monte carlo estimate") {
  VectorXd lambda(3), a_diag(3);
  lambda << 1.0, 0.5, 0.25;
  a_diag << 1.0, 2.0, 3.0;
  const std::int64_t batch = 4;
  const VectorXd expected =
      fourth_moment_diag(lambda, a_diag, batch, MomentMode::exact_gaussian);

  cbslab::GaussianStream<double> rng(314);
  const VectorXd scale = lambda.array().sqrt().matrix();
  const int reps = 200'000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_sq = Eigen::Vector3d::Zero();
  Eigen::Matrix3d g;
  for (int repeat = 0; repeat < reps; ++repeat) {
    g.setZero();
    for (int j = 0; j < batch; ++j) {
      Eigen::Vector3d x;
      for (int i = 0; i < 3; ++i) x[i] = scale[i] * rng();
      g += x * x.transpose();
    }
    g /= static_cast<double>(batch);
    const Eigen::Vector3d diag =
        (g * a_diag.asDiagonal() * g).diagonal();
    sum += diag;
    sum_sq += diag.array().square().matrix();
  }
  for (int i = 0; i < 3; ++i) {
    const double mean = sum[i] / reps;
    const double var = sum_sq[i] / reps - mean * mean;
    const double se = std::sqrt(var / reps);
    CHECK(std::abs(mean - expected[i]) < 3.0 * se);
  }
}

TEST_CASE("exact risk: zero noise from the minimizer is exactly zero") {
  auto p = build_powerlaw_problem<double>(8, 2.0, 3.0, 0.0);
  p.init_coeffs = p.target_coeffs;
  const auto risk = exact_excess_risk(p, 256, 0.1, 4);
  CHECK(risk.bias == 0.0);
  CHECK(risk.variance == 0.0);
  CHECK(risk.total_excess == 0.0);
}

TEST_CASE("exact risk: one step returns the initial H-norm") {
  const auto p = build_powerlaw_problem<double>(16, 2.0, 3.0, 1.0);
  const double expected =
      (p.eigenvalues.array() *
       (p.init_coeffs - p.target_coeffs).array().square())
          .sum();
  for (auto mode : {MomentMode::exact_gaussian, MomentMode::paper_operator}) {
    const auto risk = exact_excess_risk(p, 64, 0.3, 64, mode);
    CHECK(risk.total_excess == doctest::Approx(expected).epsilon(1e-12));
    CHECK(risk.variance == 0.0);
  }
}

TEST_CASE("exact risk rejects unstable or invalid configurations") {
  const auto p = build_powerlaw_problem<double>(8, 2.0, 3.0, 1.0);
  CHECK_THROWS_AS(exact_excess_risk(p, 100, 0.1, 3), std::invalid_argument);
  const double margin = stability_margin(p, 4);
  CHECK_THROWS_AS(exact_excess_risk(p, 256, margin * 1.5, 4),
                  std::invalid_argument);
  CHECK_THROWS_AS(exact_excess_risk(p, 256, -0.1, 4), std::invalid_argument);
  CHECK_THROWS_AS(
      exact_excess_risk(p, 1 << 30, stability_margin(p, 1) / 2, 1,
                        MomentMode::exact_gaussian, 1e6),
      std::invalid_argument);  // compute budget
}

TEST_CASE("covariance diagonals stay nonnegative in both modes") {
  const auto p = build_powerlaw_problem<double>(32, 2.0, 3.0, 1.0);
  for (auto mode : {MomentMode::exact_gaussian, MomentMode::paper_operator}) {
    auto state = cbslab::init_cov_state(p);
    const double gamma = stability_margin(p, 8);
    for (int t = 0; t < 500; ++t) {
      cbslab::advance_cov_state(p, state, gamma, 8, mode);
      CHECK(state.bias_diag.minCoeff() >= -1e-12);
      CHECK(state.variance_diag.minCoeff() >= -1e-12);
    }
    CHECK(state.step == 500);
  }
}

TEST_CASE("moment modes agree within a factor of two") {
  const auto p = build_powerlaw_problem<double>(64, 2.0, 3.0, 1.0);
  for (std::int64_t batch : {1, 4, 16, 64}) {
    const double gamma = 0.5 * stability_margin(p, batch);
    for (std::int64_t data : {1024, 8192}) {
      const double exact =
          exact_excess_risk(p, data, gamma, batch, MomentMode::exact_gaussian)
              .total_excess;
      const double paper =
          exact_excess_risk(p, data, gamma, batch, MomentMode::paper_operator)
              .total_excess;
      CHECK(exact / paper < 2.0);
      CHECK(paper / exact < 2.0);
    }
  }
}

TEST_CASE("truncation: doubling the dimension moves the risk by < 1%") {
  const auto small = build_powerlaw_problem<double>(256, 2.0, 3.0, 1.0);
  const auto large = build_powerlaw_problem<double>(512, 2.0, 3.0, 1.0);
  for (std::int64_t batch : {1, 8}) {
    const double gamma = 0.25 * stability_margin(large, batch);
    const double a =
        exact_excess_risk(small, 4096, gamma, batch).total_excess;
    const double b =
        exact_excess_risk(large, 4096, gamma, batch).total_excess;
    CHECK(std::abs(a - b) / b < 0.01);
  }
}

TEST_CASE("risk splits into bias and variance additively") {
  const auto p = build_powerlaw_problem<double>(32, 2.0, 3.0, 1.0);
  const auto risk = exact_excess_risk(p, 2048, 0.1, 8);
  CHECK(risk.total_excess ==
        doctest::Approx(risk.bias + risk.variance).epsilon(1e-12));
  CHECK(risk.bias >= 0.0);
  CHECK(risk.variance >= 0.0);
  CHECK(risk.kstar >= 0);
  CHECK(risk.kstar <= 32);

  // noise-only and signal-only problems isolate the two parts
  auto noise_only = build_powerlaw_problem<double>(32, 2.0, 3.0, 1.0);
  noise_only.init_coeffs = noise_only.target_coeffs;
  const auto v = exact_excess_risk(noise_only, 2048, 0.1, 8);
  CHECK(v.bias == 0.0);
  CHECK(v.variance == doctest::Approx(risk.variance).epsilon(1e-12));

  auto signal_only = build_powerlaw_problem<double>(32, 2.0, 3.0, 0.0);
  const auto b = exact_excess_risk(signal_only, 2048, 0.1, 8);
  CHECK(b.variance == 0.0);
  CHECK(b.bias == doctest::Approx(risk.bias).epsilon(1e-12));
}

TEST_CASE("sandwich: exact risk tracks the theorem-2 scale") {
  const auto p = build_powerlaw_problem<double>(256, 2.0, 3.0, 1.0);
  const double gamma = 0.25 * stability_margin(p, 1);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::int64_t data = 1 << 10; data <= 1 << 13; data *= 2) {
    const double exact = exact_excess_risk(p, data, gamma, 1).total_excess;
    const double bound = theorem2_bound(p, data, gamma, 1);
    const double log_ratio = std::log(exact / bound);
    lo = std::min(lo, log_ratio);
    hi = std::max(hi, log_ratio);
  }
  CHECK(hi - lo <= std::log(4.0));
}

TEST_CASE("cbs exponent: formula cases and validation") {
  CHECK(cbs_exponent(2.0, 3.0) == doctest::Approx(1.0 / 3.0));
  CHECK(cbs_exponent(2.0, 1.5) == 0.0);
  CHECK(cbs_exponent(2.0, 10.0) == doctest::Approx(0.6));
  CHECK_THROWS_AS(cbs_exponent(1.0, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(cbs_exponent(2.0, 0.5), std::invalid_argument);
}

TEST_CASE("oracle cbs: degenerate grids behave as stated") {
  const auto p = build_powerlaw_problem<double>(32, 2.0, 3.0, 1.0);
  const std::vector<std::int64_t> batches{1, 2, 4, 8, 16};
  std::vector<double> gammas;
  for (double g = 0.25; g > 1e-4; g /= 2) gammas.push_back(g);

  // an effectively infinite overhead accepts the largest batch
  const auto loose = oracle_cbs(p, 1024, 1e9, batches, gammas);
  CHECK(loose.critical_batch == 16);

  const std::vector<std::int64_t> single{8};
  const auto one = oracle_cbs(p, 1024, 0.2, single, gammas);
  CHECK(one.critical_batch == 8);

  const std::vector<double> infeasible{100.0};
  CHECK_THROWS(oracle_cbs(p, 1024, 0.2, batches, infeasible));
}

TEST_CASE("oracle cbs grows with the data budget at fixed overhead") {
  const auto p = build_powerlaw_problem<double>(128, 2.0, 3.0, 1.0);
  std::vector<std::int64_t> batches;
  for (std::int64_t b = 1; b <= 256; b *= 2) batches.push_back(b);
  std::vector<double> gammas;
  for (double g = 0.5; g > 1e-5; g /= std::sqrt(2.0)) gammas.push_back(g);

  const auto small = oracle_cbs(p, 1 << 10, 0.2, batches, gammas);
  const auto large = oracle_cbs(p, 1 << 14, 0.2, batches, gammas);
  CHECK(large.critical_batch >= small.critical_batch);
  CHECK(large.critical_batch > 1);
}
