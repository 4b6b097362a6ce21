#include "cbslab/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <fstream>
#include <sstream>

#include "cbslab/harness/csv.hpp"
#include "cbslab/harness/sweep.hpp"
#include "json.hpp"

namespace cbslab::harness {

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

/// Minimal log-log polyline chart; one series, labeled octave ticks.
void write_svg_chart(const std::string& path,
                     const std::vector<StepObservation<double>>& obs) {
  if (obs.empty()) return;
  const double width = 640, height = 480, margin = 60;
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const auto& o : obs) {
    const double x = std::log2(static_cast<double>(o.batch_size));
    const double y = std::log2(o.steps);
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  if (max_x == min_x) max_x = min_x + 1;
  if (max_y == min_y) max_y = min_y + 1;
  auto px = [&](double x) {
    return margin + (x - min_x) / (max_x - min_x) * (width - 2 * margin);
  };
  auto py = [&](double y) {
    return height - margin -
           (y - min_y) / (max_y - min_y) * (height - 2 * margin);
  };

  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2
      << "' y='24' text-anchor='middle' font-size='15'>steps to target vs "
         "batch size (log-log)</text>\n";
  // axes
  out << "<line x1='" << margin << "' y1='" << height - margin << "' x2='"
      << width - margin << "' y2='" << height - margin
      << "' stroke='black'/>\n";
  out << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin
      << "' y2='" << height - margin << "' stroke='black'/>\n";
  for (int e = static_cast<int>(std::ceil(min_x));
       e <= static_cast<int>(std::floor(max_x)); ++e) {
    out << "<text x='" << px(e) << "' y='" << height - margin + 18
        << "' text-anchor='middle' font-size='11'>2^" << e << "</text>\n";
  }
  for (int e = static_cast<int>(std::ceil(min_y));
       e <= static_cast<int>(std::floor(max_y)); ++e) {
    out << "<text x='" << margin - 8 << "' y='" << py(e) + 4
        << "' text-anchor='end' font-size='11'>2^" << e << "</text>\n";
  }
  out << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (const auto& o : obs)
    out << px(std::log2(static_cast<double>(o.batch_size))) << ","
        << py(std::log2(o.steps)) << " ";
  out << "'/>\n";
  for (const auto& o : obs) {
    out << "<circle cx='" << px(std::log2(static_cast<double>(o.batch_size)))
        << "' cy='" << py(std::log2(o.steps))
        << "' r='3.5' fill='steelblue'/>\n";
  }
  out << "</svg>\n";
}

}  // namespace

StepReport emit_step_report(const std::vector<RunRecord>& records,
                            const std::string& outdir,
                            const StepReportOptions& options) {
  std::filesystem::create_directories(outdir);
  StepReport report;
  report.observations = best_per_batch(records, &report.warnings);

  std::int64_t reference = options.reference_batch;
  if (reference == 0 && !report.observations.empty())
    reference = report.observations.front().batch_size;

  CsvTable table;
  table.header = {"batch", "steps", "relative_steps"};
  std::optional<double> ref_steps;
  for (const auto& o : report.observations)
    if (o.batch_size == reference) ref_steps = o.steps;
  for (const auto& o : report.observations) {
    table.rows.push_back(
        {std::to_string(o.batch_size), format_double(o.steps),
         ref_steps ? format_double(o.steps / *ref_steps) : std::string{}});
  }
  const std::string csv_path = join_path(outdir, "steps_per_batch.csv");
  write_csv(csv_path, table);
  report.files.push_back(csv_path);

  std::set<std::int64_t> distinct;
  for (const auto& o : report.observations) distinct.insert(o.batch_size);
  if (distinct.size() >= 3) {
    report.fit = fit_step_law<double>(report.observations,
                                      AlphaMode::fixed_one);
    report.critical_batch =
        critical_batch(*report.fit, options.b_opt, options.overhead).batch;
  }

  const std::string summary_path = join_path(outdir, "summary.txt");
  {
    std::ofstream out(summary_path);
    out << "runs: " << records.size()
        << "  batches with a reached target: " << report.observations.size()
        << "\n";
    for (const auto& o : report.observations)
      out << "  batch " << o.batch_size << ": best steps " << o.steps << "\n";
    for (const auto& w : report.warnings) out << "  warning: " << w << "\n";
    if (report.fit) {
      out << "step law: steps(B) = " << report.fit->a << " + " << report.fit->b
          << " / B^" << report.fit->alpha << "  (log-space rss "
          << report.fit->rss << ")\n";
      out << "critical batch at overhead " << options.overhead << " vs B_opt "
          << options.b_opt << ": " << *report.critical_batch << " (log2 "
          << std::log2(*report.critical_batch) << ")\n";
    }
  }
  report.files.push_back(summary_path);

  const std::string json_path = join_path(outdir, "report.json");
  write_fit_report(json_path, report.fit, report.critical_batch, {});
  report.files.push_back(json_path);

  if (options.svg && !report.observations.empty()) {
    const std::string svg_path = join_path(outdir, "steps_vs_batch.svg");
    write_svg_chart(svg_path, report.observations);
    report.files.push_back(svg_path);
  }
  return report;
}

std::string emit_cbs_report(
    const std::vector<std::pair<double, double>>& points,
    const CbsLawFit<double>& fit, const std::string& outdir) {
  std::filesystem::create_directories(outdir);
  CsvTable table;
  table.header = {"scale", "bstar", "fitted_bstar", "kind"};
  for (const auto& [scale, bstar] : points) {
    table.rows.push_back({format_double(scale), format_double(bstar),
                          format_double(forecast(fit, scale)), "point"});
  }
  if (!points.empty()) {
    double lo = points.front().first, hi = points.front().first;
    for (const auto& [scale, _] : points) {
      lo = std::min(lo, scale);
      hi = std::max(hi, scale);
    }
    for (int i = 0; i <= 32; ++i) {
      const double scale =
          lo * std::pow(hi * 4.0 / lo, static_cast<double>(i) / 32.0);
      table.rows.push_back({format_double(scale), "",
                            format_double(forecast(fit, scale)), "curve"});
    }
  }
  const std::string path = join_path(outdir, "cbs_points.csv");
  write_csv(path, table);
  return path;
}

void write_fit_report(const std::string& path,
                      const std::optional<StepLawFit<double>>& step_fit,
                      const std::optional<double>& critical_batch,
                      const std::optional<CbsLawFit<double>>& cbs_fit) {
  nlohmann::json j;
  if (step_fit) {
    j["step_law"] = {{"a", step_fit->a},
                     {"b", step_fit->b},
                     {"alpha", step_fit->alpha},
                     {"alpha_mode", step_fit->alpha_mode == AlphaMode::free
                                        ? "free"
                                        : "fixed-one"},
                     {"rss", step_fit->rss},
                     {"converged", step_fit->converged},
                     {"clamped", step_fit->clamped}};
  }
  if (critical_batch) {
    j["critical_batch"] = *critical_batch;
    j["log2_critical_batch"] = std::log2(*critical_batch);
  }
  if (cbs_fit) {
    j["cbs_law"] = {{"constant", cbs_fit->constant},
                    {"coefficient", cbs_fit->coefficient},
                    {"exponent", cbs_fit->exponent},
                    {"scale_kind", cbs_fit->scale_kind == ScaleKind::tokens
                                       ? "tokens"
                                       : "model-size-millions"},
                    {"rss", cbs_fit->rss},
                    {"converged", cbs_fit->converged}};
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

}  // namespace cbslab::harness
