#include "cbslab/harness/csv.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cbslab::harness {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void write_csv(const std::string& path, const CsvTable& table) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv file: " + path);
  out << join(table.header) << "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw std::runtime_error("csv row width != header width");
    out << join(row) << "\n";
  }
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv file: " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

std::vector<StepObservation<double>> read_observations_csv(
    const std::string& path) {
  const CsvTable table = read_csv(path);
  int col_n = -1, col_d = -1, col_batch = -1, col_steps = -1;
  for (int i = 0; i < static_cast<int>(table.header.size()); ++i) {
    const auto& name = table.header[i];
    if (name == "scale_n_millions") col_n = i;
    if (name == "scale_d_tokens") col_d = i;
    if (name == "batch") col_batch = i;
    if (name == "steps") col_steps = i;
  }
  if (col_batch < 0 || col_steps < 0)
    throw std::runtime_error(
        "observation csv needs 'batch' and 'steps' columns");
  std::vector<StepObservation<double>> obs;
  for (const auto& row : table.rows) {
    StepObservation<double> o;
    o.batch_size = std::stoll(row.at(col_batch));
    o.steps = std::stod(row.at(col_steps));
    if (col_n >= 0 && !row.at(col_n).empty())
      o.n_millions = std::stod(row.at(col_n));
    if (col_d >= 0 && !row.at(col_d).empty())
      o.d_tokens = std::stod(row.at(col_d));
    obs.push_back(o);
  }
  return obs;
}

void write_observations_csv(const std::string& path,
                            const std::vector<StepObservation<double>>& obs) {
  CsvTable table;
  table.header = {"scale_n_millions", "scale_d_tokens", "batch", "steps"};
  for (const auto& o : obs) {
    table.rows.push_back(
        {o.n_millions ? format_double(*o.n_millions) : std::string{},
         o.d_tokens ? format_double(*o.d_tokens) : std::string{},
         std::to_string(o.batch_size), format_double(o.steps)});
  }
  write_csv(path, table);
}

}  // namespace cbslab::harness
