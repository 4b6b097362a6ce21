#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cbslab/cbs_fit.hpp"
#include "cbslab/harness/kv_config.hpp"
#include "cbslab/harness/run_record.hpp"
#include "cbslab/tasks.hpp"
#include "cbslab/trainer.hpp"

namespace cbslab::harness {

/// Task plus default trainer settings resolved from a config; grid axes
/// (batch, lr, tau, beta2, seed) are overridden per run.
struct TrainerSetup {
  std::shared_ptr<Task<double>> task;
  TrainerConfig<double> defaults;
  std::string spec_hash;
  std::optional<double> n_millions;
};

/// Builds the task named by `task = least_squares | teacher_student` and
/// the trainer defaults. For the least-squares task the target may be
/// given either absolutely (target_loss) or as target_excess above the
/// validation loss of the optimum.
TrainerSetup make_trainer_setup(const KeyValueConfig& config);

/// Grid sweep over (batch, lr, tau, beta2, replica). Empty tau/beta2 axes
/// fall back to the fixed config values.
struct SweepSpec {
  std::string module = "trainer";  // trainer | sgd_sim
  KeyValueConfig fixed;
  std::vector<std::int64_t> batch_sizes;
  std::vector<double> learning_rates;
  std::vector<double> ewa_decays;
  std::vector<double> beta2s;
  std::int64_t replicas = 1;
  std::uint64_t master_seed = 0;
  std::string output_path;

  static SweepSpec from_config(const KeyValueConfig& config);
};

struct SweepOutcome {
  std::int64_t executed = 0;
  std::int64_t skipped = 0;
  std::int64_t failed = 0;
  std::vector<RunRecord> new_records;
};

/// Executes every missing grid point, appending records to the output in
/// deterministic grid order (concurrency never changes record content).
/// With resume=false the output file must not already contain records.
/// A failing point is recorded with outcome "failed" and the sweep
/// continues.
SweepOutcome run_sweep(const SweepSpec& spec, int jobs, bool resume);

/// Per batch size, the minimum steps-to-target over all other swept
/// hyperparameters. Batches whose runs never reached the target are
/// excluded and reported in `warnings`.
std::vector<StepObservation<double>> best_per_batch(
    const std::vector<RunRecord>& records,
    std::vector<std::string>* warnings = nullptr);

}  // namespace cbslab::harness
