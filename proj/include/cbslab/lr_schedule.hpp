#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cbslab {

enum class ScheduleKind { constant, cosine, wsd };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::cosine: return "cosine";
    default: return "wsd";
  }
}

inline ScheduleKind schedule_kind_from(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "wsd") return ScheduleKind::wsd;
  throw std::invalid_argument("unknown scheduler: " + name);
}

/// Learning-rate schedule with linear warmup. total_steps is the decay
/// horizon for cosine/wsd and the warmup reference for constant (where
/// it should be set to the run's step budget).
template <typename Scalar = double>
struct Schedule {
  ScheduleKind kind = ScheduleKind::constant;
  Scalar peak{};
  Scalar warmup_fraction{};       // in [0, 1)
  std::int64_t total_steps = 0;
  Scalar decay_fraction{};        // wsd: final fraction spent decaying
  Scalar floor_lr{};              // cosine: terminal learning rate
};

template <typename Scalar>
std::int64_t warmup_steps(const Schedule<Scalar>& schedule) {
  // small epsilon so fractions like 0.15 * 100 do not ceil to 16
  const double raw = static_cast<double>(schedule.warmup_fraction) *
                         static_cast<double>(schedule.total_steps) -
                     1e-9;
  const auto w = static_cast<std::int64_t>(std::ceil(std::max(raw, 0.0)));
  return std::min(w, schedule.total_steps);
}

/// Learning rate for the given 0-based step. Warmup ramps as
/// peak * (step+1) / W over steps 0..W-1, so the rate is nonzero from the
/// first step and hits peak exactly at the warmup boundary.
template <typename Scalar>
Scalar lr_at(const Schedule<Scalar>& schedule, std::int64_t step) {
  if (step < 0) throw std::invalid_argument("step must be >= 0");
  const std::int64_t total = schedule.total_steps;
  if (schedule.kind != ScheduleKind::constant && step > total)
    throw std::invalid_argument("step beyond the schedule horizon");
  const std::int64_t warmup = warmup_steps(schedule);
  if (step < warmup)
    return schedule.peak * static_cast<Scalar>(step + 1) /
           static_cast<Scalar>(warmup);

  switch (schedule.kind) {
    case ScheduleKind::constant:
      return schedule.peak;
    case ScheduleKind::cosine: {
      if (total <= warmup) return schedule.floor_lr;
      const Scalar progress = static_cast<Scalar>(step - warmup) /
                              static_cast<Scalar>(total - warmup);
      return schedule.floor_lr +
             (schedule.peak - schedule.floor_lr) *
                 (Scalar(1) + std::cos(Scalar(3.14159265358979323846) *
                                       progress)) /
                 Scalar(2);
    }
    case ScheduleKind::wsd:
    default: {
      const Scalar decay_start =
          static_cast<Scalar>(total) *
          (Scalar(1) - schedule.decay_fraction);
      const Scalar s = static_cast<Scalar>(step);
      if (s < decay_start) return schedule.peak;
      const Scalar span = static_cast<Scalar>(total) - decay_start;
      if (!(span > Scalar(0))) return Scalar(0);
      return schedule.peak * (static_cast<Scalar>(total) - s) / span;
    }
  }
}

}  // namespace cbslab
