#include "cbslab/harness/sweep.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cbslab/minibatch_sgd.hpp"
#include "cbslab/parallel.hpp"
#include "cbslab/random.hpp"

namespace cbslab::harness {

namespace {

std::string compact_number(double v) {
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}

SpectralProblem<double> problem_from(const KeyValueConfig& config) {
  return build_powerlaw_problem<double>(
      config.get_int("d"), config.get_double("a"), config.get_double("b"),
      config.get_double("sigma2"));
}

// the spec hash identifies the task and target, not sweep bookkeeping
std::string task_spec_hash(const KeyValueConfig& config) {
  static const std::set<std::string> bookkeeping{
      "output",     "batch_sizes", "learning_rates", "gammas",
      "ewa_decays", "beta2s",      "replicas",       "seed",
      "jobs"};
  KeyValueConfig task_only;
  for (const auto& [key, value] : config.entries())
    if (!bookkeeping.count(key)) task_only.set(key, value);
  return stable_hash(task_only.canonical());
}

struct GridPoint {
  std::int64_t batch = 0;
  double learning_rate = 0.0;
  double ewa_decay = 0.0;
  double beta2 = 0.0;
  std::int64_t replica = 0;
  std::uint64_t seed = 0;
  std::string run_id;
};

std::vector<GridPoint> enumerate_grid(const SweepSpec& spec) {
  auto taus = spec.ewa_decays;
  if (taus.empty()) taus = {spec.fixed.get_double("ewa_decay", 0.0)};
  auto beta2s = spec.beta2s;
  if (beta2s.empty()) beta2s = {spec.fixed.get_double("beta2", 0.99)};
  if (spec.batch_sizes.empty() || spec.learning_rates.empty())
    throw std::invalid_argument("sweep needs batch and learning-rate axes");
  if (spec.replicas < 1)
    throw std::invalid_argument("sweep needs at least one replica");

  std::vector<GridPoint> grid;
  std::set<std::string> ids;
  for (std::int64_t batch : spec.batch_sizes) {
    for (double lr : spec.learning_rates) {
      for (double tau : taus) {
        for (double beta2 : beta2s) {
          for (std::int64_t rep = 0; rep < spec.replicas; ++rep) {
            GridPoint point;
            point.batch = batch;
            point.learning_rate = lr;
            point.ewa_decay = tau;
            point.beta2 = beta2;
            point.replica = rep;
            // seeds hash the coordinate values, not their grid indices,
            // so extending an axis never reseeds existing points
            point.seed = derive_seed(
                spec.master_seed,
                {static_cast<std::uint64_t>(batch),
                 std::bit_cast<std::uint64_t>(lr),
                 std::bit_cast<std::uint64_t>(tau),
                 std::bit_cast<std::uint64_t>(beta2),
                 static_cast<std::uint64_t>(rep)});
            std::ostringstream id;
            id << "b" << batch << "-lr" << compact_number(lr) << "-tau"
               << compact_number(tau) << "-b2" << compact_number(beta2)
               << "-r" << rep;
            point.run_id = id.str();
            if (!ids.insert(point.run_id).second)
              throw std::invalid_argument("duplicate grid point: " +
                                          point.run_id);
            grid.push_back(std::move(point));
          }
        }
      }
    }
  }
  return grid;
}

}  // namespace

TrainerSetup make_trainer_setup(const KeyValueConfig& config) {
  TrainerSetup setup;
  const std::string kind = config.get_string("task", "least_squares");

  TrainerConfig<double> defaults;
  defaults.batch_size = config.get_int("batch_size", 16);
  defaults.peak_lr = config.get_double("learning_rate", 0.01);
  defaults.adam.beta1 = config.get_double("beta1", 0.95);
  defaults.adam.beta2 = config.get_double("beta2", 0.99);
  defaults.adam.epsilon = config.get_double("epsilon", 1e-8);
  defaults.adam.grad_clip_norm = config.get_double("grad_clip_norm", 1.0);
  defaults.schedule_kind =
      schedule_kind_from(config.get_string("scheduler", "constant"));
  defaults.warmup_fraction = config.get_double("warmup_fraction", 0.0);
  defaults.total_steps = config.get_int("total_steps", 0);
  defaults.decay_fraction = config.get_double("decay_fraction", 0.2);
  defaults.floor_lr = config.get_double("floor_lr", 0.0);
  defaults.ewa_decay = config.get_double("ewa_decay", 0.0);
  defaults.eval_interval = config.get_int("eval_interval", 1000);
  defaults.max_steps = config.get_int("max_steps", 10000);
  defaults.seed = static_cast<std::uint64_t>(config.get_int("seed", 1));

  if (kind == "least_squares") {
    auto problem = problem_from(config);
    auto task = std::make_shared<LeastSquaresTask<double>>(
        problem, config.get_int("validation_size", 10000),
        static_cast<std::uint64_t>(config.get_int("validation_seed", 424242)));
    if (config.has("target_loss")) {
      defaults.target_loss = config.get_double("target_loss");
    } else {
      defaults.target_loss =
          task->validation_loss(problem.target_coeffs) +
          config.get_double("target_excess");
    }
    setup.task = std::move(task);
  } else if (kind == "teacher_student") {
    setup.task = std::make_shared<TeacherStudentTask<double>>(
        config.get_int("input_dim", 8), config.get_int("hidden_dim", 8),
        config.get_double("noise_std", 0.0),
        static_cast<std::uint64_t>(config.get_int("task_seed", 7)),
        config.get_int("validation_size", 10000));
    defaults.target_loss = config.get_double("target_loss");
  } else {
    throw std::invalid_argument("unknown task: " + kind);
  }

  setup.defaults = defaults;
  setup.spec_hash = task_spec_hash(config);
  if (config.has("n_millions"))
    setup.n_millions = config.get_double("n_millions");
  return setup;
}

SweepSpec SweepSpec::from_config(const KeyValueConfig& config) {
  SweepSpec spec;
  spec.module = config.get_string("module", "trainer");
  spec.fixed = config;
  spec.batch_sizes = config.get_ints("batch_sizes");
  spec.learning_rates = config.get_doubles(
      config.has("learning_rates") ? "learning_rates" : "gammas");
  if (config.has("ewa_decays")) spec.ewa_decays = config.get_doubles("ewa_decays");
  if (config.has("beta2s")) spec.beta2s = config.get_doubles("beta2s");
  spec.replicas = config.get_int("replicas", 1);
  spec.master_seed = static_cast<std::uint64_t>(config.get_int("seed", 1));
  spec.output_path = config.get_string("output", "records.jsonl");
  return spec;
}

SweepOutcome run_sweep(const SweepSpec& spec, int jobs, bool resume) {
  const auto grid = enumerate_grid(spec);
  const auto existing = load_records(spec.output_path);
  if (!resume && !existing.empty())
    throw std::runtime_error(
        "output already holds records; pass resume to continue " +
        spec.output_path);
  std::set<std::string> done;
  for (const auto& r : existing) done.insert(r.run_id);

  std::vector<const GridPoint*> todo;
  for (const auto& point : grid)
    if (!done.count(point.run_id)) todo.push_back(&point);

  SweepOutcome outcome;
  outcome.skipped = static_cast<std::int64_t>(grid.size() - todo.size());
  if (todo.empty()) return outcome;

  const std::string spec_hash = task_spec_hash(spec.fixed);
  std::optional<double> n_millions;
  if (spec.fixed.has("n_millions"))
    n_millions = spec.fixed.get_double("n_millions");
  std::optional<std::int64_t> problem_dim;
  std::optional<double> capacity_a, source_b, noise_sigma2;
  if (spec.fixed.has("d")) problem_dim = spec.fixed.get_int("d");
  if (spec.fixed.has("a")) capacity_a = spec.fixed.get_double("a");
  if (spec.fixed.has("b")) source_b = spec.fixed.get_double("b");
  if (spec.fixed.has("sigma2")) noise_sigma2 = spec.fixed.get_double("sigma2");

  // shared immutable state for the workers
  std::shared_ptr<Task<double>> task;
  TrainerConfig<double> defaults;
  SpectralProblem<double> problem;
  if (spec.module == "trainer") {
    auto setup = make_trainer_setup(spec.fixed);
    task = setup.task;
    defaults = setup.defaults;
  } else if (spec.module == "sgd_sim") {
    problem = problem_from(spec.fixed);
  } else {
    throw std::invalid_argument("unknown sweep module: " + spec.module);
  }
  const std::int64_t data_size =
      spec.module == "sgd_sim" ? spec.fixed.get_int("data_size") : 0;

  auto execute = [&](const GridPoint& point) {
    RunRecord record;
    record.run_id = point.run_id;
    record.module = spec.module;
    record.spec_hash = spec_hash;
    record.n_millions = n_millions;
    record.problem_dim = problem_dim;
    record.capacity_a = capacity_a;
    record.source_b = source_b;
    record.noise_sigma2 = noise_sigma2;
    record.batch_size = point.batch;
    record.learning_rate = point.learning_rate;
    record.ewa_decay = point.ewa_decay;
    record.beta2 = point.beta2;
    record.seed = point.seed;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (spec.module == "trainer") {
        TrainerConfig<double> cfg = defaults;
        cfg.batch_size = point.batch;
        cfg.peak_lr = point.learning_rate;
        cfg.ewa_decay = point.ewa_decay;
        cfg.adam.beta2 = point.beta2;
        cfg.seed = point.seed;
        const auto run = run_training(*task, cfg);
        const std::int64_t steps_run =
            run.status == RunStatus::reached    ? run.steps_to_target
            : run.status == RunStatus::diverged ? run.divergence_step
                                                : cfg.max_steps;
        record.data_size = steps_run * point.batch;
        switch (run.status) {
          case RunStatus::reached:
            record.outcome = "steps_to_target";
            record.steps = run.steps_to_target;
            break;
          case RunStatus::not_reached:
            record.outcome = "not-reached";
            break;
          case RunStatus::diverged:
            record.outcome = "diverged";
            record.steps = run.divergence_step;
            break;
        }
      } else {
        SGDConfig<double> cfg;
        cfg.batch_size = point.batch;
        cfg.learning_rate = point.learning_rate;
        cfg.data_size = data_size;
        cfg.seed = point.seed;
        record.data_size = data_size;
        const auto run = run_minibatch_sgd(problem, cfg);
        if (run.diverged) {
          record.outcome = "diverged";
          record.steps = run.divergence_step;
        } else {
          record.outcome = "excess_risk";
          record.excess_risk = excess_risk(problem, run.averaged_iterate);
        }
      }
    } catch (const std::exception& err) {
      record.outcome = "failed";
      record.message = err.what();
    }
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return record;
  };

  // chunked execution: points run concurrently, records land in grid
  // order, and a crash loses at most one chunk
  const std::size_t chunk_size =
      static_cast<std::size_t>(std::max(1, resolve_jobs(jobs) * 4));
  for (std::size_t begin = 0; begin < todo.size(); begin += chunk_size) {
    const std::size_t end = std::min(begin + chunk_size, todo.size());
    std::vector<RunRecord> chunk(end - begin);
    parallel_for(static_cast<std::int64_t>(end - begin), jobs,
                 [&](std::int64_t i) {
                   chunk[i] = execute(*todo[begin + i]);
                 });
    append_records(spec.output_path, chunk);
    for (auto& record : chunk) {
      if (record.outcome == "failed") ++outcome.failed;
      ++outcome.executed;
      outcome.new_records.push_back(std::move(record));
    }
  }
  return outcome;
}

std::vector<StepObservation<double>> best_per_batch(
    const std::vector<RunRecord>& records,
    std::vector<std::string>* warnings) {
  if (records.empty()) return {};
  const std::string& hash = records.front().spec_hash;
  for (const auto& r : records)
    if (r.spec_hash != hash)
      throw std::invalid_argument(
          "records mix different task specs; refusing to pool them");

  std::map<std::int64_t, const RunRecord*> best;
  std::set<std::int64_t> seen;
  for (const auto& r : records) {
    seen.insert(r.batch_size);
    if (r.outcome != "steps_to_target" || !r.steps) continue;
    auto [it, inserted] = best.emplace(r.batch_size, &r);
    if (!inserted && *r.steps < *it->second->steps) it->second = &r;
  }
  if (warnings != nullptr) {
    for (std::int64_t batch : seen) {
      if (!best.count(batch))
        warnings->push_back("batch " + std::to_string(batch) +
                            ": no run reached the target; excluded");
    }
  }
  std::vector<StepObservation<double>> out;
  for (const auto& [batch, record] : best) {
    StepObservation<double> o;
    o.batch_size = batch;
    o.steps = static_cast<double>(*record->steps);
    if (record->n_millions) o.n_millions = *record->n_millions;
    out.push_back(o);
  }
  return out;
}

}  // namespace cbslab::harness
