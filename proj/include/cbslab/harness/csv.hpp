#pragma once

#include <string>
#include <vector>

#include "cbslab/cbs_fit.hpp"

namespace cbslab::harness {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

/// Observation files use the columns
///   scale_n_millions, scale_d_tokens, batch, steps
/// with empty cells for absent scale labels.
std::vector<StepObservation<double>> read_observations_csv(
    const std::string& path);
void write_observations_csv(const std::string& path,
                            const std::vector<StepObservation<double>>& obs);

}  // namespace cbslab::harness
