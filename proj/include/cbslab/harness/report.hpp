#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbslab/cbs_fit.hpp"
#include "cbslab/harness/run_record.hpp"

namespace cbslab::harness {

struct StepReportOptions {
  std::int64_t reference_batch = 0;  // 0 = smallest observed batch
  double b_opt = 256.0;
  double overhead = 0.2;
  bool svg = false;
};

struct StepReport {
  std::vector<StepObservation<double>> observations;
  std::optional<StepLawFit<double>> fit;        // present with >= 3 batches
  std::optional<double> critical_batch;
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

/// Reduces records to best-per-batch observations and writes
/// steps_per_batch.csv (with a relative-steps column keyed to the
/// reference batch), a plain-text summary, a JSON fit report, and
/// optionally a log-log SVG chart of steps vs batch.
StepReport emit_step_report(const std::vector<RunRecord>& records,
                            const std::string& outdir,
                            const StepReportOptions& options);

/// Writes cbs_points.csv with the (scale, B*) points, the fitted value at
/// each point, and sampled fitted-curve rows.
std::string emit_cbs_report(
    const std::vector<std::pair<double, double>>& points,
    const CbsLawFit<double>& fit, const std::string& outdir);

/// JSON snapshot of fitted step-law / scaling-law parameters.
void write_fit_report(const std::string& path,
                      const std::optional<StepLawFit<double>>& step_fit,
                      const std::optional<double>& critical_batch,
                      const std::optional<CbsLawFit<double>>& cbs_fit);

}  // namespace cbslab::harness
