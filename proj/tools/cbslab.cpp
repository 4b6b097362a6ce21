// Command-line front end: simulation, exact oracle evaluation, sweeps,
// desk-scale training, curve fitting, forecasting, and report emission.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cbslab/cbs_fit.hpp"
#include "cbslab/harness/csv.hpp"
#include "cbslab/harness/kv_config.hpp"
#include "cbslab/harness/report.hpp"
#include "cbslab/harness/run_record.hpp"
#include "cbslab/harness/sweep.hpp"
#include "cbslab/minibatch_sgd.hpp"
#include "cbslab/risk_oracle.hpp"
#include "cbslab/trainer.hpp"

namespace {

using namespace cbslab;
using namespace cbslab::harness;

std::string output_dir() {
  const char* env = std::getenv("CBSLAB_OUTDIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

std::string in_outdir(const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(output_dir()) / path).string();
}

struct ProblemflagSet {
  std::int64_t d = 64;
  double a = 2.0;
  double b = 3.0;
  double sigma2 = 1.0;
  std::string config_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--problem", config_path,
                    "problem config file (keys: d, a, b, sigma2)");
    cmd->add_option("-d,--dim", d, "problem dimension");
    cmd->add_option("-a,--capacity", a, "eigenvalue decay exponent");
    cmd->add_option("-b,--source", b, "signal decay exponent");
    cmd->add_option("--sigma2", sigma2, "label noise variance");
  }

  SpectralProblem<double> build() const {
    if (!config_path.empty()) {
      const auto cfg = KeyValueConfig::from_file(config_path);
      return build_powerlaw_problem<double>(
          cfg.get_int("d"), cfg.get_double("a"), cfg.get_double("b"),
          cfg.get_double("sigma2"));
    }
    return build_powerlaw_problem<double>(d, a, b, sigma2);
  }

  std::string hash() const {
    KeyValueConfig cfg;
    if (!config_path.empty()) cfg = KeyValueConfig::from_file(config_path);
    else {
      cfg.set_int("d", d);
      cfg.set_double("a", a);
      cfg.set_double("b", b);
      cfg.set_double("sigma2", sigma2);
    }
    return stable_hash(cfg.canonical());
  }
};

MomentMode mode_from(const std::string& name) {
  if (name == "exact-gaussian") return MomentMode::exact_gaussian;
  if (name == "paper-operator") return MomentMode::paper_operator;
  throw CLI::ValidationError("--mode", "expected exact-gaussian|paper-operator");
}

int cmd_simulate(const ProblemflagSet& problem_flags, std::int64_t batch,
                 double gamma, std::int64_t data_size, std::uint64_t seed,
                 std::int64_t reps, int jobs, const std::string& records_path) {
  const auto problem = problem_flags.build();
  const auto start = std::chrono::steady_clock::now();
  SGDConfig<double> cfg{batch, gamma, data_size, seed, false};

  RunRecord record;
  record.module = "sgd_sim";
  record.spec_hash = problem_flags.hash();
  record.problem_dim = problem.dim();
  record.capacity_a = problem.capacity_exponent;
  record.source_b = problem.source_exponent;
  record.noise_sigma2 = problem.noise_variance;
  record.data_size = data_size;
  record.batch_size = batch;
  record.learning_rate = gamma;
  record.seed = seed;
  record.run_id = "sim-b" + std::to_string(batch) + "-s" +
                  std::to_string(seed) + "-" + record.spec_hash.substr(0, 8);

  if (reps >= 2) {
    const auto mc = mc_excess_risk(problem, cfg, reps, jobs);
    std::cout << "replicas " << mc.replicas << " (diverged "
              << mc.diverged_replicas << ")  mean excess risk " << mc.mean
              << "  standard error " << mc.standard_error << "\n";
    record.outcome = mc.diverged_replicas == mc.replicas ? "diverged"
                                                         : "excess_risk";
    record.excess_risk = mc.mean;
    record.standard_error = mc.standard_error;
  } else {
    const auto run = run_minibatch_sgd(problem, cfg);
    if (run.diverged) {
      std::cout << "diverged at step " << run.divergence_step << "\n";
      record.outcome = "diverged";
      record.steps = run.divergence_step;
    } else {
      const double risk = excess_risk(problem, run.averaged_iterate);
      std::cout << "excess risk of the averaged iterate: " << risk << "\n";
      record.outcome = "excess_risk";
      record.excess_risk = risk;
    }
  }
  record.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  if (!records_path.empty()) append_records(in_outdir(records_path), {record});
  return 0;
}

int cmd_oracle(const ProblemflagSet& problem_flags, std::int64_t data_size,
               std::vector<std::int64_t> batches, std::vector<double> gammas,
               const std::string& mode_name, double overhead,
               const std::string& out_path) {
  const auto problem = problem_flags.build();
  const auto mode = mode_from(mode_name);
  if (batches.empty()) batches = {1};
  if (gammas.empty()) {
    for (double g = 0.5; g > 1e-4; g /= std::sqrt(2.0)) gammas.push_back(g);
  }

  const double head_energy =
      (problem.eigenvalues.array() *
       (problem.init_coeffs - problem.target_coeffs).array().square())
          .sum();
  std::cout << "initial_bias_to_noise "
            << (problem.noise_variance > 0
                    ? head_energy / problem.noise_variance
                    : std::numeric_limits<double>::infinity())
            << "\n";

  CsvTable table;
  table.header = {"D", "B", "gamma", "kstar", "bias", "variance", "total",
                  "bound"};
  for (std::int64_t batch : batches) {
    const double margin = stability_margin(problem, batch);
    for (double gamma : gammas) {
      if (gamma > margin || data_size % batch != 0) continue;
      const auto risk = exact_excess_risk(problem, data_size, gamma, batch,
                                          mode);
      const double bound = theorem2_bound(problem, data_size, gamma, batch);
      table.rows.push_back(
          {std::to_string(data_size), std::to_string(batch),
           std::to_string(gamma), std::to_string(risk.kstar),
           std::to_string(risk.bias), std::to_string(risk.variance),
           std::to_string(risk.total_excess), std::to_string(bound)});
    }
  }
  if (!out_path.empty()) {
    write_csv(in_outdir(out_path), table);
    std::cout << "wrote " << table.rows.size() << " rows to "
              << in_outdir(out_path) << "\n";
  } else {
    for (const auto& row : table.rows) {
      for (std::size_t i = 0; i < row.size(); ++i)
        std::cout << (i ? "," : "") << row[i];
      std::cout << "\n";
    }
  }

  if (overhead > 0) {
    const auto result = oracle_cbs(problem, data_size, overhead, batches,
                                   gammas, mode);
    std::cout << "oracle critical batch at overhead " << overhead << ": "
              << result.critical_batch << " (log2 "
              << std::log2(static_cast<double>(result.critical_batch))
              << ")\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& evals_path,
              const std::string& records_path) {
  const auto config = KeyValueConfig::from_file(config_path);
  auto setup = make_trainer_setup(config);
  const auto start = std::chrono::steady_clock::now();
  const auto run = run_training(*setup.task, setup.defaults);

  if (!evals_path.empty()) {
    CsvTable table;
    table.header = {"step", "val_loss_ewa", "val_loss_raw", "lr"};
    for (const auto& e : run.evals) {
      table.rows.push_back({std::to_string(e.step),
                            std::to_string(e.val_loss_ewa),
                            std::to_string(e.val_loss_raw),
                            std::to_string(e.lr)});
    }
    write_csv(in_outdir(evals_path), table);
  }

  RunRecord record;
  record.module = "trainer";
  record.spec_hash = setup.spec_hash;
  record.n_millions = setup.n_millions;
  record.batch_size = setup.defaults.batch_size;
  record.learning_rate = setup.defaults.peak_lr;
  record.ewa_decay = setup.defaults.ewa_decay;
  record.beta2 = setup.defaults.adam.beta2;
  record.seed = setup.defaults.seed;
  record.run_id = "train-" + record.spec_hash.substr(0, 8) + "-s" +
                  std::to_string(record.seed);
  switch (run.status) {
    case RunStatus::reached:
      record.outcome = "steps_to_target";
      record.steps = run.steps_to_target;
      std::cout << "reached the target at step " << run.steps_to_target
                << "\n";
      break;
    case RunStatus::not_reached:
      record.outcome = "not-reached";
      std::cout << "target not reached within " << setup.defaults.max_steps
                << " steps\n";
      break;
    case RunStatus::diverged:
      record.outcome = "diverged";
      record.steps = run.divergence_step;
      std::cout << "diverged at step " << run.divergence_step << "\n";
      break;
  }
  const std::int64_t steps_run =
      run.status == RunStatus::reached    ? run.steps_to_target
      : run.status == RunStatus::diverged ? run.divergence_step
                                          : setup.defaults.max_steps;
  record.data_size = steps_run * setup.defaults.batch_size;
  record.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  if (!records_path.empty()) append_records(in_outdir(records_path), {record});
  return run.status == RunStatus::diverged ? 1 : 0;
}

int cmd_fit_steps(const std::string& input, const std::string& alpha_name,
                  double b_opt, double overhead,
                  const std::string& report_path) {
  const auto obs = read_observations_csv(input);
  const auto mode =
      alpha_name == "free" ? AlphaMode::free : AlphaMode::fixed_one;
  const auto fit = fit_step_law<double>(obs, mode);
  std::cout << "steps(B) = " << fit.a << " + " << fit.b << " / B^"
            << fit.alpha << "   (log-space rss " << fit.rss
            << (fit.converged ? "" : ", did not converge") << ")\n";
  const auto cb = critical_batch(fit, b_opt, overhead);
  std::cout << "critical batch at overhead " << overhead << " vs B_opt "
            << b_opt << ": " << cb.batch << " (log2 " << std::log2(cb.batch)
            << ")" << (cb.non_monotone_fit ? "  [non-monotone fit]" : "")
            << "\n";
  if (!report_path.empty())
    write_fit_report(in_outdir(report_path), fit, cb.batch, {});
  return 0;
}

int cmd_fit_cbs(const std::string& input, const std::string& scale_kind_name,
                bool free_constant, const std::string& report_path,
                const std::string& points_outdir) {
  const auto table = read_csv(input);
  int col_scale = -1, col_bstar = -1;
  for (int i = 0; i < static_cast<int>(table.header.size()); ++i) {
    if (table.header[i] == "scale") col_scale = i;
    if (table.header[i] == "bstar") col_bstar = i;
  }
  if (col_scale < 0 || col_bstar < 0)
    throw std::runtime_error("cbs csv needs 'scale' and 'bstar' columns");
  std::vector<std::pair<double, double>> points;
  for (const auto& row : table.rows)
    points.emplace_back(std::stod(row.at(col_scale)),
                        std::stod(row.at(col_bstar)));
  const auto kind = scale_kind_name == "tokens"
                        ? ScaleKind::tokens
                        : ScaleKind::model_size_millions;
  const auto fit = fit_cbs_law<double>(points, !free_constant, kind);
  std::cout << "B*(scale) = " << fit.constant << " + " << fit.coefficient
            << " * scale^" << fit.exponent << "   (log-space rss " << fit.rss
            << ")\n";
  if (!report_path.empty())
    write_fit_report(in_outdir(report_path), {}, {}, fit);
  if (!points_outdir.empty()) {
    const auto path = emit_cbs_report(points, fit, in_outdir(points_outdir));
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int cmd_report(const std::string& records_path, const std::string& outdir,
               std::int64_t reference_batch, double b_opt, double overhead,
               bool svg) {
  const auto records = load_records(records_path);
  StepReportOptions options;
  options.reference_batch = reference_batch;
  options.b_opt = b_opt;
  options.overhead = overhead;
  options.svg = svg;
  const auto report = emit_step_report(records, in_outdir(outdir), options);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : report.files) std::cout << "wrote " << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "critical-batch-size laboratory: exact risk oracle, SGD simulator, "
      "desk-scale trainer, and CBS fitting pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  int jobs = 0;
  app.add_option("--jobs", jobs,
                 "worker threads (0 = hardware concurrency)");

  // simulate
  auto* simulate = app.add_subcommand(
      "simulate", "run mini-batch SGD replicas and report the excess risk");
  ProblemflagSet sim_problem;
  sim_problem.attach(simulate);
  std::int64_t sim_batch = 8;
  double sim_gamma = 0.1;
  std::int64_t sim_data = 4096;
  std::uint64_t sim_seed = 1;
  std::int64_t sim_reps = 64;
  std::string sim_records;
  simulate->add_option("-B,--batch", sim_batch, "batch size");
  simulate->add_option("-g,--gamma", sim_gamma, "constant step size");
  simulate->add_option("-D,--data-size", sim_data, "total samples");
  simulate->add_option("--seed", sim_seed, "base seed");
  simulate->add_option("--reps", sim_reps, "replicas (1 = single run)");
  simulate->add_option("--records", sim_records, "append a record here");

  // oracle
  auto* oracle = app.add_subcommand(
      "oracle", "exact excess risk of averaged mini-batch SGD, no sampling");
  ProblemflagSet oracle_problem;
  oracle_problem.attach(oracle);
  std::int64_t oracle_data = 4096;
  std::vector<std::int64_t> oracle_batches;
  std::vector<double> oracle_gammas;
  std::string oracle_mode = "exact-gaussian";
  double oracle_overhead = 0.0;
  std::string oracle_out;
  oracle->add_option("-D,--data-size", oracle_data, "total samples");
  oracle->add_option("-B,--batch", oracle_batches, "batch sizes");
  oracle->add_option("-g,--gamma", oracle_gammas,
                     "step sizes (default: grid under the stability margin)");
  oracle->add_option("--mode", oracle_mode,
                     "exact-gaussian | paper-operator");
  oracle->add_option("--overhead", oracle_overhead,
                     "also report the oracle critical batch at this overhead");
  oracle->add_option("-o,--out", oracle_out, "write rows to this csv");

  // sweep
  auto* sweep = app.add_subcommand("sweep",
                                   "run a hyperparameter grid from a spec");
  std::string sweep_spec_path;
  std::string sweep_out_override;
  std::optional<std::int64_t> sweep_seed_override;
  bool sweep_resume = false;
  sweep->add_option("--spec", sweep_spec_path, "sweep spec file")->required();
  sweep->add_option("-o,--out", sweep_out_override, "override output path");
  sweep->add_option("--seed", sweep_seed_override, "override master seed");
  sweep->add_flag("--resume", sweep_resume,
                  "skip run ids already present in the output");

  // train
  auto* train = app.add_subcommand("train", "one desk-scale training run");
  std::string train_config, train_evals, train_records;
  train->add_option("--config", train_config, "trainer config file")
      ->required();
  train->add_option("--evals", train_evals, "write EvalPoint rows here");
  train->add_option("--records", train_records, "append a record here");

  // fit-steps
  auto* fit_steps = app.add_subcommand(
      "fit-steps", "fit the steps-vs-batch law and solve the critical batch");
  std::string fs_input, fs_alpha = "fixed", fs_report;
  double fs_bopt = 256.0, fs_overhead = 0.2;
  fit_steps->add_option("-i,--input", fs_input, "observation csv")
      ->required();
  fit_steps->add_option("--alpha", fs_alpha, "fixed | free");
  fit_steps->add_option("--b-opt", fs_bopt, "reference batch size");
  fit_steps->add_option("--overhead", fs_overhead, "diminishing-return overhead");
  fit_steps->add_option("--report", fs_report, "write fitted params as json");

  // fit-cbs
  auto* fit_cbs_cmd = app.add_subcommand(
      "fit-cbs", "fit the critical-batch scaling law vs model or data size");
  std::string fc_input, fc_scale = "model", fc_report, fc_points_outdir;
  bool fc_free_constant = false;
  fit_cbs_cmd->add_option("-i,--input", fc_input, "csv with scale,bstar")
      ->required();
  fit_cbs_cmd->add_option("--scale-kind", fc_scale, "model | tokens");
  fit_cbs_cmd->add_flag("--free-constant", fc_free_constant,
                        "fit the additive constant instead of fixing it to 0");
  fit_cbs_cmd->add_option("--report", fc_report, "write fitted params as json");
  fit_cbs_cmd->add_option("--outdir", fc_points_outdir,
                          "also write cbs_points.csv with curve samples");

  // forecast
  auto* forecast_cmd =
      app.add_subcommand("forecast", "evaluate a fitted scaling law");
  double fo_constant = 0.0, fo_coefficient = 93.20, fo_exponent = 0.47;
  std::vector<double> fo_scales;
  forecast_cmd->add_option("--constant", fo_constant, "additive constant");
  forecast_cmd->add_option("--coefficient", fo_coefficient, "coefficient");
  forecast_cmd->add_option("--exponent", fo_exponent, "exponent");
  forecast_cmd->add_option("--scale", fo_scales, "scales to evaluate")
      ->required();

  // chinchilla-steps
  auto* chin = app.add_subcommand(
      "chinchilla-steps", "steps for a token budget proportional to size");
  double ch_n = 85e6, ch_batch = 256, ch_ctx = 512, ch_ratio = 20.34;
  chin->add_option("--n-params", ch_n, "parameter count")->required();
  chin->add_option("--batch", ch_batch, "batch size");
  chin->add_option("--ctx-len", ch_ctx, "context length");
  chin->add_option("--ratio", ch_ratio, "token-to-parameter ratio");

  // report
  auto* report_cmd = app.add_subcommand(
      "report", "emit csv/summary/chart files from run records");
  std::string rp_records, rp_outdir = "report";
  std::int64_t rp_reference = 0;
  double rp_bopt = 256.0, rp_overhead = 0.2;
  bool rp_svg = false;
  report_cmd->add_option("--records", rp_records, "records jsonl")
      ->required();
  report_cmd->add_option("--outdir", rp_outdir, "output directory");
  report_cmd->add_option("--reference-batch", rp_reference,
                         "batch the relative column is keyed to");
  report_cmd->add_option("--b-opt", rp_bopt, "reference batch size");
  report_cmd->add_option("--overhead", rp_overhead,
                         "diminishing-return overhead");
  report_cmd->add_flag("--svg", rp_svg, "also draw a log-log chart");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed())
      return cmd_simulate(sim_problem, sim_batch, sim_gamma, sim_data,
                          sim_seed, sim_reps, jobs, sim_records);
    if (oracle->parsed())
      return cmd_oracle(oracle_problem, oracle_data, oracle_batches,
                        oracle_gammas, oracle_mode, oracle_overhead,
                        oracle_out);
    if (sweep->parsed()) {
      auto config = KeyValueConfig::from_file(sweep_spec_path);
      if (sweep_seed_override) config.set_int("seed", *sweep_seed_override);
      auto spec = SweepSpec::from_config(config);
      if (!sweep_out_override.empty()) spec.output_path = sweep_out_override;
      spec.output_path = in_outdir(spec.output_path);
      const auto outcome = run_sweep(spec, jobs, sweep_resume);
      std::cout << "executed " << outcome.executed << " point(s), skipped "
                << outcome.skipped << ", failed " << outcome.failed
                << "; records in " << spec.output_path << "\n";
      return outcome.failed > 0 ? 1 : 0;
    }
    if (train->parsed())
      return cmd_train(train_config, train_evals, train_records);
    if (fit_steps->parsed())
      return cmd_fit_steps(fs_input, fs_alpha, fs_bopt, fs_overhead,
                           fs_report);
    if (fit_cbs_cmd->parsed())
      return cmd_fit_cbs(fc_input, fc_scale, fc_free_constant, fc_report,
                         fc_points_outdir);
    if (forecast_cmd->parsed()) {
      CbsLawFit<double> law;
      law.constant = fo_constant;
      law.coefficient = fo_coefficient;
      law.exponent = fo_exponent;
      for (double scale : fo_scales) {
        const double value = cbslab::forecast(law, scale);
        std::cout << "scale " << scale << ": B* = " << value << " (log2 "
                  << std::log2(value) << ")\n";
      }
      return 0;
    }
    if (chin->parsed()) {
      std::cout << chinchilla_steps(ch_n, ch_batch, ch_ctx, ch_ratio) << "\n";
      return 0;
    }
    if (report_cmd->parsed())
      return cmd_report(rp_records, rp_outdir, rp_reference, rp_bopt,
                        rp_overhead, rp_svg);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
