#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "cbslab/adam.hpp"
#include "cbslab/lr_schedule.hpp"
#include "cbslab/tasks.hpp"

namespace cbslab {

template <typename Scalar = double>
struct TrainerConfig {
  std::int64_t batch_size = 1;
  Scalar peak_lr{};
  AdamConfig<Scalar> adam{};
  ScheduleKind schedule_kind = ScheduleKind::constant;
  Scalar warmup_fraction{};
  std::int64_t total_steps = 0;  // decay horizon for cosine/wsd
  Scalar decay_fraction{};       // wsd
  Scalar floor_lr{};             // cosine
  Scalar ewa_decay{};            // tau; 0 evaluates the raw weights
  std::int64_t eval_interval = 1000;
  Scalar target_loss{};
  std::int64_t max_steps = 0;
  std::uint64_t seed = 0;
};

template <typename Scalar>
void validate(const TrainerConfig<Scalar>& cfg) {
  validate(cfg.adam);
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(cfg.peak_lr > Scalar(0)))
    throw std::invalid_argument("peak learning rate must be positive");
  if (!(cfg.ewa_decay >= Scalar(0) && cfg.ewa_decay <= Scalar(1)))
    throw std::invalid_argument("ewa decay must lie in [0, 1]");
  if (!(cfg.warmup_fraction >= Scalar(0) && cfg.warmup_fraction < Scalar(1)))
    throw std::invalid_argument("warmup fraction must lie in [0, 1)");
  if (cfg.max_steps < 1) throw std::invalid_argument("max steps must be >= 1");
  if (cfg.schedule_kind != ScheduleKind::constant && cfg.total_steps < 1)
    throw std::invalid_argument("decaying schedules need total_steps");
  if (cfg.eval_interval < 1)
    throw std::invalid_argument("eval interval must be >= 1");
}

template <typename Scalar = double>
struct EvalPoint {
  std::int64_t step = 0;
  Scalar val_loss_ewa{};
  Scalar val_loss_raw{};
  Scalar lr{};
};

enum class RunStatus { reached, not_reached, diverged };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::reached: return "reached";
    case RunStatus::not_reached: return "not-reached";
    default: return "diverged";
  }
}

template <typename Scalar = double>
struct TrainingRun {
  RunStatus status = RunStatus::not_reached;
  std::int64_t steps_to_target = -1;   // valid when status == reached
  std::int64_t divergence_step = -1;   // valid when status == diverged
  std::vector<EvalPoint<Scalar>> evals;
  VectorX<Scalar> final_params;
  VectorX<Scalar> ewa_params;
};

/// Evaluation steps for a run of n_total steps: powers of two, multiples
/// of base_interval, and a dense tail at ceil(0.70 n), ceil(0.75 n), ...,
/// n, deduplicated and sorted. The final step is always included.
inline std::vector<std::int64_t> eval_cadence(std::int64_t n_total,
                                              std::int64_t base_interval) {
  if (n_total < 1) throw std::invalid_argument("need at least one step");
  std::set<std::int64_t> steps;
  for (std::int64_t p = 1; p <= n_total && p > 0; p *= 2) steps.insert(p);
  if (base_interval >= 1)
    for (std::int64_t s = base_interval; s <= n_total; s += base_interval)
      steps.insert(s);
  for (int pct = 70; pct <= 100; pct += 5)
    steps.insert((pct * n_total + 99) / 100);  // exact ceil in integers
  return {steps.begin(), steps.end()};
}

/// Running weight average xi <- tau * xi + (1 - tau) * theta.
template <typename Scalar>
void ewa_update(VectorX<Scalar>& average, const VectorX<Scalar>& params,
                Scalar tau) {
  if (!(tau >= Scalar(0) && tau <= Scalar(1)))
    throw std::invalid_argument("ewa decay must lie in [0, 1]");
  average = tau * average + (Scalar(1) - tau) * params;
}

/// Trains the task with Adam under the configured schedule, maintaining
/// the weight average (initialized to the starting weights) and
/// evaluating it on the task's validation set at the cadence steps.
/// Stops at the first cadence step whose averaged-weight validation loss
/// reaches target_loss. Identical configs produce identical runs.
template <typename Scalar>
TrainingRun<Scalar> run_training(const Task<Scalar>& task,
                                 const TrainerConfig<Scalar>& cfg) {
  validate(cfg);
  Schedule<Scalar> schedule{cfg.schedule_kind, cfg.peak_lr,
                            cfg.warmup_fraction, cfg.total_steps,
                            cfg.decay_fraction, cfg.floor_lr};
  std::int64_t horizon = cfg.max_steps;
  if (cfg.schedule_kind == ScheduleKind::constant) {
    schedule.total_steps = cfg.max_steps;
  } else {
    horizon = std::min(horizon, cfg.total_steps);
  }
  const auto cadence = eval_cadence(horizon, cfg.eval_interval);

  GaussianStream<Scalar> rng(cfg.seed);
  VectorX<Scalar> params = task.initial_params(rng);
  VectorX<Scalar> average = params;
  VectorX<Scalar> grad(task.dim());
  AdamState<Scalar> opt = init_adam_state<Scalar>(task.dim());

  TrainingRun<Scalar> run;
  auto next_eval = cadence.begin();
  for (std::int64_t step = 1; step <= horizon; ++step) {
    const Scalar lr = lr_at(schedule, step - 1);
    Scalar loss;
    try {
      loss = task.batch_loss_grad(params, cfg.batch_size, rng, grad);
      if (!std::isfinite(loss))
        throw DivergenceError(step, "non-finite training loss");
      adam_step(opt, params, grad, lr, cfg.adam);
    } catch (const DivergenceError&) {
      run.status = RunStatus::diverged;
      run.divergence_step = step;
      break;
    }
    ewa_update(average, params, cfg.ewa_decay);

    if (next_eval != cadence.end() && *next_eval == step) {
      ++next_eval;
      EvalPoint<Scalar> point;
      point.step = step;
      point.val_loss_ewa = task.validation_loss(average);
      point.val_loss_raw = task.validation_loss(params);
      point.lr = lr;
      run.evals.push_back(point);
      if (!std::isfinite(point.val_loss_ewa)) {
        run.status = RunStatus::diverged;
        run.divergence_step = step;
        break;
      }
      if (point.val_loss_ewa <= cfg.target_loss) {
        run.status = RunStatus::reached;
        run.steps_to_target = step;
        break;
      }
    }
  }
  run.final_params = std::move(params);
  run.ewa_params = std::move(average);
  return run;
}

/// First cadence step whose averaged-weight validation loss is at or
/// below the target; the run outcome distinguishes not-reached from
/// diverged.
template <typename Scalar>
TrainingRun<Scalar> steps_to_target(const Task<Scalar>& task,
                                    const TrainerConfig<Scalar>& cfg) {
  return run_training(task, cfg);
}

}  // namespace cbslab
