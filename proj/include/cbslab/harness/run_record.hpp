#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cbslab::harness {

/// One executed run: a simulator replica, an oracle evaluation, or a
/// trainer run. Persisted as one JSON object per line so interrupted
/// sweeps lose at most the in-flight chunk.
struct RunRecord {
  std::string run_id;
  std::string module;     // sgd_sim | trainer | risk_oracle
  std::string spec_hash;  // stable hash of the problem/task settings
  std::optional<double> n_millions;  // model-size label, when meaningful
  // power-law problem parameters, when the run has them
  std::optional<std::int64_t> problem_dim;
  std::optional<double> capacity_a;
  std::optional<double> source_b;
  std::optional<double> noise_sigma2;
  std::int64_t data_size = 0;        // samples or tokens
  std::int64_t batch_size = 0;
  double learning_rate = 0.0;  // gamma for the simulator/oracle
  double ewa_decay = 0.0;
  double beta2 = 0.0;
  std::uint64_t seed = 0;
  std::string outcome;  // steps_to_target | excess_risk | diverged |
                        // not-reached | failed
  std::optional<std::int64_t> steps;
  std::optional<double> excess_risk;
  std::optional<double> standard_error;
  std::string message;  // failure detail, empty otherwise
  double wall_ms = 0.0;

  bool operator==(const RunRecord&) const = default;
};

std::string to_json_line(const RunRecord& record);
RunRecord record_from_json_line(const std::string& line);

/// Appends records to a JSONL file, creating it if needed.
void append_records(const std::string& path,
                    const std::vector<RunRecord>& records);

/// Loads every record of a JSONL file; missing file -> empty list.
std::vector<RunRecord> load_records(const std::string& path);

}  // namespace cbslab::harness
