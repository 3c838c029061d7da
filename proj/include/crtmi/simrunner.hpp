#ifndef CRTMI_SIMRUNNER_HPP
#define CRTMI_SIMRUNNER_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "crtmi/missingness.hpp"
#include "crtmi/trial.hpp"

namespace crtmi {

struct ReplicateRecord {
  int scenario_index = 0;
  int replicate = 0;
  Method method = Method::CCA;
  int outcome = 0;  // 0 -> Y1, 1 -> Y2
  double estimate = 0.0;
  double std_error = 0.0;
  double df = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool converged = false;
  int n_imputation_failures = 0;
};

struct PerfSummary {
  int scenario_index = 0;
  Method method = Method::CCA;
  int outcome = 0;
  int n_effective = 0;
  double coverage_rate = 0.0;  // percent
  double bias = 0.0;
  double pct_bias = 0.0;  // NaN marks a zero true value
  double rmse = 0.0;
  double avg_width = 0.0;
  double mc_error_bias = 0.0;
  double mc_error_cr = 0.0;  // percentage points
  bool flag_undercoverage = false;
  bool flag_overcoverage = false;
  bool flag_biased = false;
};

struct RunOptions {
  int parallelism = 1;
  /// Verify that imputation leaves observed cells bit-identical.
  bool check_observed_cells = false;
  int mmi_burn_in = 500;
  int mmi_thin = 100;
  int fcs_cycles = 10;
};

struct ScenarioResult {
  std::vector<ReplicateRecord> records;
  std::vector<PerfSummary> summaries;
  int observed_cell_violations = 0;
};

/// Execute one scenario: N replicates of generate -> impose missingness ->
/// analyse by each method -> pool. Output is independent of parallelism.
/// Throws if more than 10% of replicates fail for any method.
ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

/// Performance measures over the records of one scenario x method x outcome.
/// Non-converged records are excluded; requires at least 2 converged records.
PerfSummary compute_performance(const std::vector<ReplicateRecord>& records, double true_theta);

void write_records_csv(std::ostream& out, const std::vector<ReplicateRecord>& records);
std::vector<ReplicateRecord> read_records_csv(std::istream& in);

void write_scenario_manifest_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios);
std::vector<ScenarioConfig> read_scenario_manifest_csv(std::istream& in);

void write_summary_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                       const std::vector<PerfSummary>& summaries);
struct SummaryRow {
  PerfSummary perf;
  std::string design, mechanism, eta, nonresponse;
  double icc1 = 0.0, icc2 = 0.0;
  std::string method, outcome;
};
std::vector<SummaryRow> read_summary_csv(std::istream& in);

/// Long-format report tables: percentage bias (Table-3 shape) and coverage
/// rate / average width with the under- and over-coverage flags (Table-4
/// shape).
void write_pct_bias_table_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                              const std::vector<PerfSummary>& summaries);
void write_cr_aw_table_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                           const std::vector<PerfSummary>& summaries);

/// Serialise floats with 17 significant digits (round-trip exact).
std::string format_double(double v);

}  // namespace crtmi

#endif
