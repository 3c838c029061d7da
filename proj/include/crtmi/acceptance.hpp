#ifndef CRTMI_ACCEPTANCE_HPP
#define CRTMI_ACCEPTANCE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crtmi/config_file.hpp"
#include "crtmi/lmm.hpp"
#include "crtmi/simrunner.hpp"

namespace crtmi {

/// Reference to a scenario-level performance metric, e.g. CCA.Y1.pct_bias.
struct MetricRef {
  std::string method;
  std::string outcome;
  std::string measure;  // cr, bias, pct_bias, rmse, aw, mc_error_bias, mc_error_cr
};

/// One assertion line. Plain comparisons must hold in every scenario of the
/// case; count(...) aggregates across scenarios.
struct Assertion {
  enum class Kind {
    CompareConst,        // REF op NUM
    CompareRef,          // REF op REF
    AbsCompareConst,     // abs(REF) op NUM
    AbsCompareRefScaled, // abs(REF) op NUM * REF
    CountInRange,        // count(REF in [a,b]) >= K
  };
  Kind kind = Kind::CompareConst;
  std::string text;
  MetricRef lhs;
  std::string op = "<";
  double rhs_value = 0.0;
  MetricRef rhs_ref;
  double scale = 1.0;
  double range_lo = 0.0;
  double range_hi = 0.0;
  int min_count = 0;
};

Assertion parse_assertion(const std::string& line);

struct BuiltinCheck {
  std::string name;
  std::map<std::string, std::string> args;
};

struct AcceptanceCase {
  std::string name;
  std::optional<RunConfig> config;
  std::vector<Assertion> assertions;
  std::vector<BuiltinCheck> builtins;
  double runtime_budget_s = 0.0;  // informational only
};

struct AssertionResult {
  std::string case_name;
  std::string check;
  std::string scenario;  // scenario index or "-"
  double observed = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string note;
  bool errored = false;
};

struct AcceptanceReport {
  std::vector<AssertionResult> rows;
  bool case_passed(const std::string& case_name) const;
  bool all_passed() const;
};

std::vector<AcceptanceCase> parse_suite_text(const std::string& text);
std::vector<AcceptanceCase> load_suite_file(const std::string& path);

/// The shipped acceptance suite (nine criteria with fixed seeds).
std::vector<AcceptanceCase> default_acceptance_suite();

/// Execute the suite. Scenario runs are cached across cases keyed by their
/// full configuration, and every run verifies that imputation leaves observed
/// cells untouched. Infrastructure failures mark the case errored and the
/// suite continues.
AcceptanceReport run_acceptance(const std::vector<AcceptanceCase>& suite, int parallelism);

void write_report_csv(std::ostream& out, const AcceptanceReport& report);

/// Dense-matrix evaluation of the bivariate mixed-model log-likelihood:
/// builds each cluster's full 2n_j x 2n_j covariance I (x) Sigma + J (x) Psi.
/// Reference oracle for the structured evaluation.
double dense_marginal_loglik(const VarParams& theta, const Eigen::Vector4d& beta,
                             const TrialDataset& data);

}  // namespace crtmi

#endif
