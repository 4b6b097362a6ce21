#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cbslab/spectral_problem.hpp"

namespace cbslab {

/// Raised when training hits non-finite gradients or losses; carries the
/// step at which it happened.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : std::runtime_error(what + " at step " + std::to_string(step)),
        step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

template <typename Scalar = double>
struct AdamConfig {
  Scalar beta1 = Scalar(0.95);
  Scalar beta2 = Scalar(0.99);
  Scalar epsilon = Scalar(1e-8);
  Scalar grad_clip_norm = Scalar(1.0);
};

template <typename Scalar>
void validate(const AdamConfig<Scalar>& cfg) {
  if (!(cfg.beta1 >= Scalar(0) && cfg.beta1 < Scalar(1)))
    throw std::invalid_argument("beta1 must lie in [0, 1)");
  if (!(cfg.beta2 >= Scalar(0) && cfg.beta2 < Scalar(1)))
    throw std::invalid_argument("beta2 must lie in [0, 1)");
  if (!(cfg.grad_clip_norm > Scalar(0)))
    throw std::invalid_argument("gradient clip norm must be positive");
}

template <typename Scalar = double>
struct AdamState {
  VectorX<Scalar> first_moment;
  VectorX<Scalar> second_moment;
  std::int64_t step = 0;  // number of updates applied
};

template <typename Scalar>
AdamState<Scalar> init_adam_state(Eigen::Index dim) {
  return {VectorX<Scalar>::Zero(dim), VectorX<Scalar>::Zero(dim), 0};
}

/// One Adam update: global-norm gradient clipping, then bias-corrected
/// first/second-moment step. Throws DivergenceError on non-finite
/// gradients.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, VectorX<Scalar>& params,
               const VectorX<Scalar>& grads, Scalar lr,
               const AdamConfig<Scalar>& cfg) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size())
    throw std::invalid_argument("parameter/gradient/state shape mismatch");
  if (!grads.allFinite())
    throw DivergenceError(state.step, "non-finite gradient");

  const Scalar norm = grads.norm();
  const Scalar clip_scale =
      norm > cfg.grad_clip_norm ? cfg.grad_clip_norm / norm : Scalar(1);

  state.step += 1;
  const Scalar correction1 =
      Scalar(1) - std::pow(cfg.beta1, static_cast<Scalar>(state.step));
  const Scalar correction2 =
      Scalar(1) - std::pow(cfg.beta2, static_cast<Scalar>(state.step));

  auto g = (clip_scale * grads).array();
  state.first_moment.array() =
      cfg.beta1 * state.first_moment.array() + (Scalar(1) - cfg.beta1) * g;
  state.second_moment.array() = cfg.beta2 * state.second_moment.array() +
                                (Scalar(1) - cfg.beta2) * g.square();
  params.array() -=
      lr * (state.first_moment.array() / correction1) /
      ((state.second_moment.array() / correction2).sqrt() + cfg.epsilon);
}

}  // namespace cbslab
