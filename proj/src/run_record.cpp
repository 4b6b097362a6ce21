#include "cbslab/harness/run_record.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace cbslab::harness {

namespace {

using nlohmann::json;

json to_json(const RunRecord& r) {
  json j{{"run_id", r.run_id},
         {"module", r.module},
         {"spec_hash", r.spec_hash},
         {"data_size", r.data_size},
         {"batch_size", r.batch_size},
         {"learning_rate", r.learning_rate},
         {"ewa_decay", r.ewa_decay},
         {"beta2", r.beta2},
         {"seed", r.seed},
         {"outcome", r.outcome},
         {"wall_ms", r.wall_ms}};
  if (r.n_millions) j["n_millions"] = *r.n_millions;
  if (r.problem_dim) j["d"] = *r.problem_dim;
  if (r.capacity_a) j["a"] = *r.capacity_a;
  if (r.source_b) j["b"] = *r.source_b;
  if (r.noise_sigma2) j["sigma2"] = *r.noise_sigma2;
  if (r.steps) j["steps"] = *r.steps;
  if (r.excess_risk) j["excess_risk"] = *r.excess_risk;
  if (r.standard_error) j["standard_error"] = *r.standard_error;
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

RunRecord from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.module = j.at("module").get<std::string>();
  r.spec_hash = j.at("spec_hash").get<std::string>();
  r.data_size = j.at("data_size").get<std::int64_t>();
  r.batch_size = j.at("batch_size").get<std::int64_t>();
  r.learning_rate = j.at("learning_rate").get<double>();
  r.ewa_decay = j.at("ewa_decay").get<double>();
  r.beta2 = j.at("beta2").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.outcome = j.at("outcome").get<std::string>();
  r.wall_ms = j.at("wall_ms").get<double>();
  if (j.contains("n_millions")) r.n_millions = j["n_millions"].get<double>();
  if (j.contains("d")) r.problem_dim = j["d"].get<std::int64_t>();
  if (j.contains("a")) r.capacity_a = j["a"].get<double>();
  if (j.contains("b")) r.source_b = j["b"].get<double>();
  if (j.contains("sigma2")) r.noise_sigma2 = j["sigma2"].get<double>();
  if (j.contains("steps")) r.steps = j["steps"].get<std::int64_t>();
  if (j.contains("excess_risk"))
    r.excess_risk = j["excess_risk"].get<double>();
  if (j.contains("standard_error"))
    r.standard_error = j["standard_error"].get<double>();
  if (j.contains("message")) r.message = j["message"].get<std::string>();
  return r;
}

}  // namespace

std::string to_json_line(const RunRecord& record) {
  return to_json(record).dump();
}

RunRecord record_from_json_line(const std::string& line) {
  return from_json(json::parse(line));
}

void append_records(const std::string& path,
                    const std::vector<RunRecord>& records) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open record file: " + path);
  for (const auto& r : records) out << to_json_line(r) << "\n";
}

std::vector<RunRecord> load_records(const std::string& path) {
  std::vector<RunRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json_line(line));
  }
  return out;
}

}  // namespace cbslab::harness
