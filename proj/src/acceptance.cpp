#include "crtmi/acceptance.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "crtmi/anova.hpp"
#include "crtmi/impute_mmi.hpp"
#include "crtmi/missingness.hpp"
#include "crtmi/pooling.hpp"
#include "crtmi/stats.hpp"

namespace crtmi {

double dense_marginal_loglik(const VarParams& theta, const Eigen::Vector4d& beta,
                             const TrialDataset& data) {
  const VarComp vc = varcomp_from_unconstrained(theta);
  std::map<int, std::vector<const TrialRow*>> clusters;
  for (const auto& row : data.rows) clusters[row.cluster_id].push_back(&row);

  double loglik = 0.0;
  for (const auto& [id, rows] : clusters) {
    const int n = static_cast<int>(rows.size());
    const int dim = 2 * n;
    Eigen::MatrixXd v(dim, dim);
    Eigen::VectorXd resid(dim);
    for (int i = 0; i < n; ++i) {
      const int arm = rows[i]->arm;
      resid(2 * i) = rows[i]->y1 - (beta(0) + beta(1) * arm);
      resid(2 * i + 1) = rows[i]->y2 - (beta(2) + beta(3) * arm);
      for (int k = 0; k < n; ++k)
        v.block<2, 2>(2 * i, 2 * k) = (i == k ? vc.sigma : Eigen::Matrix2d::Zero()) + vc.psi;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    double logdet = 0.0;
    for (int i = 0; i < dim; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const Eigen::VectorXd solved = llt.solve(resid);
    loglik -= 0.5 * (dim * std::log(2.0 * std::numbers::pi) + logdet + resid.dot(solved));
  }
  return loglik;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_number(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == trim(s).size();
  } catch (...) {
    return false;
  }
}

MetricRef parse_metric_ref(const std::string& text) {
  const std::string s = trim(text);
  const auto d1 = s.find('.');
  const auto d2 = s.find('.', d1 == std::string::npos ? d1 : d1 + 1);
  if (d1 == std::string::npos || d2 == std::string::npos)
    throw std::invalid_argument("bad metric reference: " + s);
  MetricRef ref{s.substr(0, d1), s.substr(d1 + 1, d2 - d1 - 1), s.substr(d2 + 1)};
  static const std::vector<std::string> methods{"CCA", "SMI", "FMI", "MMI"};
  static const std::vector<std::string> measures{"cr",   "bias",          "pct_bias",
                                                 "rmse", "aw",            "mc_error_bias",
                                                 "mc_error_cr"};
  if (std::find(methods.begin(), methods.end(), ref.method) == methods.end())
    throw std::invalid_argument("unknown metric: bad method in " + s);
  if (ref.outcome != "Y1" && ref.outcome != "Y2")
    throw std::invalid_argument("unknown metric: bad outcome in " + s);
  if (std::find(measures.begin(), measures.end(), ref.measure) == measures.end())
    throw std::invalid_argument("unknown metric: bad measure in " + s);
  return ref;
}

std::string take_operator(std::istringstream& in) {
  std::string op;
  in >> op;
  if (op != "<" && op != ">" && op != "<=" && op != ">=")
    throw std::invalid_argument("bad comparison operator: " + op);
  return op;
}

}  // namespace

Assertion parse_assertion(const std::string& line) {
  Assertion a;
  a.text = trim(line);
  const std::string& s = a.text;

  if (s.rfind("count(", 0) == 0) {
    const auto close = s.find(')');
    if (close == std::string::npos) throw std::invalid_argument("bad assertion: " + s);
    const std::string inner = s.substr(6, close - 6);
    const auto in_pos = inner.find(" in ");
    if (in_pos == std::string::npos) throw std::invalid_argument("bad assertion: " + s);
    a.kind = Assertion::Kind::CountInRange;
    a.lhs = parse_metric_ref(inner.substr(0, in_pos));
    std::string range = trim(inner.substr(in_pos + 4));
    if (range.size() < 2 || range.front() != '[' || range.back() != ']')
      throw std::invalid_argument("bad range in: " + s);
    range = range.substr(1, range.size() - 2);
    const auto comma = range.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("bad range in: " + s);
    a.range_lo = std::stod(range.substr(0, comma));
    a.range_hi = std::stod(range.substr(comma + 1));
    std::istringstream rest(s.substr(close + 1));
    a.op = take_operator(rest);
    if (a.op != ">=" && a.op != ">") throw std::invalid_argument("count needs >= or >: " + s);
    rest >> a.min_count;
    if (rest.fail()) throw std::invalid_argument("bad count bound: " + s);
    return a;
  }

  if (s.rfind("abs(", 0) == 0) {
    const auto close = s.find(')');
    if (close == std::string::npos) throw std::invalid_argument("bad assertion: " + s);
    a.lhs = parse_metric_ref(s.substr(4, close - 4));
    std::istringstream rest(s.substr(close + 1));
    a.op = take_operator(rest);
    std::string token;
    rest >> token;
    double value = 0.0;
    if (!parse_number(token, value)) throw std::invalid_argument("bad rhs in: " + s);
    std::string star;
    if (rest >> star && star == "*") {
      std::string ref_text;
      rest >> ref_text;
      a.kind = Assertion::Kind::AbsCompareRefScaled;
      a.scale = value;
      a.rhs_ref = parse_metric_ref(ref_text);
    } else {
      a.kind = Assertion::Kind::AbsCompareConst;
      a.rhs_value = value;
    }
    return a;
  }

  std::istringstream in(s);
  std::string lhs_text;
  in >> lhs_text;
  a.lhs = parse_metric_ref(lhs_text);
  a.op = take_operator(in);
  std::string rhs_text;
  in >> rhs_text;
  double value = 0.0;
  if (parse_number(rhs_text, value)) {
    a.kind = Assertion::Kind::CompareConst;
    a.rhs_value = value;
  } else {
    a.kind = Assertion::Kind::CompareRef;
    a.rhs_ref = parse_metric_ref(rhs_text);
  }
  return a;
}

std::vector<AcceptanceCase> parse_suite_text(const std::string& text) {
  std::vector<AcceptanceCase> suite;
  std::istringstream in(text);
  std::string line;
  AcceptanceCase current;
  bool in_case = false;
  bool in_config = false;
  std::string config_buffer;

  while (std::getline(in, line)) {
    if (in_config) {
      if (trim(line) == "end") {
        in_config = false;
        current.config = parse_config_text(config_buffer);
        config_buffer.clear();
      } else {
        config_buffer += line + "\n";
      }
      continue;
    }
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (!in_case) {
      if (line.rfind("case ", 0) == 0) {
        current = AcceptanceCase{};
        current.name = trim(line.substr(5));
        in_case = true;
      } else {
        throw std::invalid_argument("expected 'case NAME', got: " + line);
      }
      continue;
    }
    if (line == "end") {
      suite.push_back(std::move(current));
      in_case = false;
    } else if (line == "config") {
      in_config = true;
    } else if (line.rfind("budget ", 0) == 0) {
      current.runtime_budget_s = std::stod(line.substr(7));
    } else if (line.rfind("assert ", 0) == 0) {
      current.assertions.push_back(parse_assertion(line.substr(7)));
    } else if (line.rfind("builtin ", 0) == 0) {
      BuiltinCheck check;
      std::istringstream rest(line.substr(8));
      rest >> check.name;
      std::string kv;
      while (rest >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw std::invalid_argument("builtin argument needs key=value: " + kv);
        check.args[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      current.builtins.push_back(std::move(check));
    } else {
      throw std::invalid_argument("unexpected suite line: " + line);
    }
  }
  if (in_case) throw std::invalid_argument("unterminated case: " + current.name);
  return suite;
}

std::vector<AcceptanceCase> load_suite_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open suite file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_suite_text(buffer.str());
}

namespace {

constexpr const char* kDefaultSuite = R"SUITE(
# Shipped acceptance criteria. Seeds are fixed so runs are comparable.

case criterion-1-cca-bias-differential
  budget 900
  config
    factors.mechanism = treatment
    factors.design = many-small
    factors.icc = 0.01,0.01
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  assert CCA.Y1.pct_bias < -10
  assert abs(SMI.Y1.pct_bias) < 5
  assert abs(FMI.Y1.pct_bias) < 5
  assert abs(MMI.Y1.pct_bias) < 5
end

case criterion-2-unbiased-nondifferential
  budget 2700
  config
    factors.mechanism = individual, cluster, both
    factors.design = many-small
    factors.icc = 0.20,0.20
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  assert abs(CCA.Y1.bias) <= 3 * CCA.Y1.mc_error_bias
  assert abs(SMI.Y1.bias) <= 3 * SMI.Y1.mc_error_bias
  assert abs(FMI.Y1.bias) <= 3 * FMI.Y1.mc_error_bias
  assert abs(MMI.Y1.bias) <= 3 * MMI.Y1.mc_error_bias
  assert abs(CCA.Y2.bias) <= 3 * CCA.Y2.mc_error_bias
  assert abs(SMI.Y2.bias) <= 3 * SMI.Y2.mc_error_bias
  assert abs(FMI.Y2.bias) <= 3 * FMI.Y2.mc_error_bias
  assert abs(MMI.Y2.bias) <= 3 * MMI.Y2.mc_error_bias
end

case criterion-3-smi-undercoverage
  budget 900
  config
    factors.mechanism = treatment
    factors.design = few-large
    factors.icc = 0.20,0.20
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  assert SMI.Y1.cr < 92
  assert SMI.Y1.cr < MMI.Y1.cr
end

case criterion-4-fmi-overcoverage
  budget 900
  config
    factors.mechanism = treatment
    factors.design = many-small
    factors.icc = 0.01,0.01
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  assert FMI.Y1.cr > 97
end

case criterion-5-mmi-nominal-coverage
  budget 7200
  config
    factors.mechanism = treatment
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  assert count(MMI.Y1.cr in [92,97.5]) >= 10
end

case criterion-6-fmi-inefficiency
  budget 7200
  config
    factors.mechanism = treatment
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  assert FMI.Y1.aw > SMI.Y1.aw
  assert FMI.Y1.aw > MMI.Y1.aw
end

case criterion-7-oracles
  budget 60
  builtin oracle_loglik_dense
  builtin oracle_rubin
  builtin oracle_anova
  builtin oracle_calibration
end

case criterion-8-determinism
  budget 1800
  config
    factors.mechanism = treatment
    factors.design = many-small
    factors.icc = 0.01,0.01
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  builtin determinism
end

case criterion-9-sampler-validity
  budget 900
  config
    factors.mechanism = treatment
    factors.design = many-small
    factors.icc = 0.01,0.01
    factors.eta = low
    factors.nonresponse = equal
    run.N = 1000
    run.M = 10
    run.seed = 1729
    run.methods = CCA,SMI,FMI,MMI
  end
  builtin mmi_recovery
  builtin mmi_stationarity
  builtin observed_cells
end
)SUITE";

double metric_value(const PerfSummary& p, const std::string& measure) {
  if (measure == "cr") return p.coverage_rate;
  if (measure == "bias") return p.bias;
  if (measure == "pct_bias") return p.pct_bias;
  if (measure == "rmse") return p.rmse;
  if (measure == "aw") return p.avg_width;
  if (measure == "mc_error_bias") return p.mc_error_bias;
  if (measure == "mc_error_cr") return p.mc_error_cr;
  throw std::invalid_argument("unknown metric: " + measure);
}

const PerfSummary& find_summary(const std::vector<PerfSummary>& summaries, const MetricRef& ref) {
  const int outcome = ref.outcome == "Y1" ? 0 : 1;
  for (const auto& p : summaries)
    if (to_string(p.method) == ref.method && p.outcome == outcome) return p;
  throw std::runtime_error("metric not produced by run: " + ref.method + "." + ref.outcome);
}

bool compare(const std::string& op, double lhs, double rhs) {
  if (op == "<") return lhs < rhs;
  if (op == ">") return lhs > rhs;
  if (op == "<=") return lhs <= rhs;
  return lhs >= rhs;
}

struct ScenarioRun {
  ScenarioConfig config;
  ScenarioResult result;
};

class SuiteRunner {
 public:
  explicit SuiteRunner(int parallelism) : parallelism_(parallelism) {}

  AcceptanceReport run(const std::vector<AcceptanceCase>& suite) {
    AcceptanceReport report;
    for (const auto& acase : suite) {
      try {
        run_case(acase, report);
      } catch (const std::exception& err) {
        AssertionResult row;
        row.case_name = acase.name;
        row.check = "(case)";
        row.scenario = "-";
        row.errored = true;
        row.note = err.what();
        report.rows.push_back(std::move(row));
      }
    }
    return report;
  }

 private:
  std::vector<ScenarioRun> case_scenarios(const AcceptanceCase& acase) {
    if (!acase.config) return {};
    const auto grid = build_scenario_grid(acase.config->seed, acase.config->overrides);
    std::vector<ScenarioRun> runs;
    for (const auto& cfg : grid) runs.push_back({cfg, cached_run(cfg)});
    return runs;
  }

  ScenarioResult cached_run(const ScenarioConfig& cfg) {
    std::ostringstream key;
    write_scenario_manifest_csv(key, {cfg});
    const auto it = cache_.find(key.str());
    if (it != cache_.end()) return it->second;
    RunOptions options;
    options.parallelism = parallelism_;
    options.check_observed_cells = true;
    ScenarioResult result = run_scenario(cfg, options);
    cache_.emplace(key.str(), result);
    return result;
  }

  void run_case(const AcceptanceCase& acase, AcceptanceReport& report) {
    const std::vector<ScenarioRun> runs = case_scenarios(acase);
    for (const auto& assertion : acase.assertions)
      evaluate_assertion(acase.name, assertion, runs, report);
    for (const auto& builtin : acase.builtins)
      evaluate_builtin(acase.name, builtin, acase, runs, report);
  }

  void evaluate_assertion(const std::string& case_name, const Assertion& assertion,
                          const std::vector<ScenarioRun>& runs, AcceptanceReport& report) {
    if (runs.empty()) throw std::runtime_error("assertion without scenarios: " + assertion.text);
    if (assertion.kind == Assertion::Kind::CountInRange) {
      int count = 0;
      for (const auto& run : runs) {
        const double v =
            metric_value(find_summary(run.result.summaries, assertion.lhs), assertion.lhs.measure);
        if (v >= assertion.range_lo && v <= assertion.range_hi) ++count;
      }
      AssertionResult row;
      row.case_name = case_name;
      row.check = assertion.text;
      row.scenario = "-";
      row.observed = count;
      row.bound = assertion.min_count;
      row.pass = compare(assertion.op, count, assertion.min_count);
      report.rows.push_back(std::move(row));
      return;
    }
    for (const auto& run : runs) {
      const PerfSummary& lhs_summary = find_summary(run.result.summaries, assertion.lhs);
      double lhs = metric_value(lhs_summary, assertion.lhs.measure);
      double rhs = assertion.rhs_value;
      switch (assertion.kind) {
        case Assertion::Kind::AbsCompareConst:
          lhs = std::abs(lhs);
          break;
        case Assertion::Kind::AbsCompareRefScaled:
          lhs = std::abs(lhs);
          rhs = assertion.scale *
                metric_value(find_summary(run.result.summaries, assertion.rhs_ref),
                             assertion.rhs_ref.measure);
          break;
        case Assertion::Kind::CompareRef:
          rhs = metric_value(find_summary(run.result.summaries, assertion.rhs_ref),
                             assertion.rhs_ref.measure);
          break;
        default:
          break;
      }
      AssertionResult row;
      row.case_name = case_name;
      row.check = assertion.text;
      row.scenario = std::to_string(run.config.scenario_index);
      row.observed = lhs;
      row.bound = rhs;
      row.pass = compare(assertion.op, lhs, rhs);
      report.rows.push_back(std::move(row));
    }
  }

  void evaluate_builtin(const std::string& case_name, const BuiltinCheck& builtin,
                        const AcceptanceCase& acase, const std::vector<ScenarioRun>& runs,
                        AcceptanceReport& report) {
    const auto push = [&](const std::string& check, const std::string& scenario, double observed,
                          double bound, bool pass, const std::string& note = "") {
      AssertionResult row;
      row.case_name = case_name;
      row.check = check;
      row.scenario = scenario;
      row.observed = observed;
      row.bound = bound;
      row.pass = pass;
      row.note = note;
      report.rows.push_back(std::move(row));
    };

    if (builtin.name == "oracle_rubin") {
      const PooledEstimate pooled = rubin_pool({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0});
      const double err = std::max({std::abs(pooled.q_bar - 2.0),
                                   std::abs(pooled.total - 7.0 / 3.0),
                                   std::abs(pooled.df - 6.125)});
      push("builtin oracle_rubin", "-", err, 1e-12, err <= 1e-12);
    } else if (builtin.name == "oracle_anova") {
      const std::vector<double> response{1, 2, 3, 5, 2, 4, 6, 8};
      const std::vector<std::vector<int>> levels{{0, 0}, {0, 0}, {0, 1}, {0, 1},
                                                 {1, 0}, {1, 0}, {1, 1}, {1, 1}};
      const std::vector<FactorSpec> factors{{"a", 2}, {"b", 2}};
      const AnovaTable table = factorial_anova(response, levels, factors, "oracle", 2);
      const double err = std::max({std::abs(table.terms[0].f - 81.0 / 13.0),
                                   std::abs(table.terms[1].f - 13.0),
                                   std::abs(table.terms[2].f - 9.0 / 13.0)});
      push("builtin oracle_anova", "-", err, 1e-10, err <= 1e-10);
    } else if (builtin.name == "oracle_calibration") {
      const double a0 = calibrate_alpha0(Mechanism::individual, 0.0, 0.2);
      const double err0 = std::abs(a0 - logit(0.2));
      push("builtin oracle_calibration eta=0", "-", err0, 1e-10, err0 <= 1e-10);
      // Independent trapezoid quadrature as the cross-check for eta = 1.
      const auto rate = [](double alpha0) {
        const int n = 48001;
        const double lo = -12.0, hi = 12.0;
        const double h = (hi - lo) / (n - 1);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
          const double x = lo + i * h;
          const double weight = (i == 0 || i == n - 1) ? 0.5 : 1.0;
          total += weight * logistic(alpha0 + x) *
                   std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        }
        return total * h;
      };
      double lo = -10.0, hi = 10.0;
      for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (rate(mid) < 0.2 ? lo : hi) = mid;
      }
      const double oracle = 0.5 * (lo + hi);
      const double ours = calibrate_alpha0(Mechanism::individual, 1.0, 0.2);
      const double err1 = std::abs(ours - oracle);
      push("builtin oracle_calibration eta=1", "-", err1, 1e-3, err1 <= 1e-3);
    } else if (builtin.name == "oracle_loglik_dense") {
      RngStream stream = make_stream(888, 0, 0, "loglik-oracle");
      double worst = 0.0;
      for (int rep = 0; rep < 100; ++rep) {
        ScenarioConfig cfg;
        cfg.design.label = "tiny";
        cfg.design.n_clusters = 4;
        cfg.design.size_rule = {SizeRule::Kind::fixed, 3, 0.0, 0.0};
        cfg.gen.sigma = {1.0, 0.8};
        cfg.gen.tau = {0.5, 0.6};
        cfg.gen.rho = 0.3;
        cfg.gen.phi = 0.2;
        const TrialDataset data = generate_dataset(cfg, stream);
        VarParams theta;
        Eigen::Vector4d beta;
        for (int i = 0; i < 6; ++i) theta(i) = stream.uniform() - 0.5;
        for (int i = 0; i < 4; ++i) beta(i) = 2.0 * stream.uniform() - 1.0;
        const double structured = marginal_loglik(theta, beta, data);
        const double dense = dense_marginal_loglik(theta, beta, data);
        worst = std::max(worst, std::abs(structured - dense) / std::max(1.0, std::abs(dense)));
      }
      push("builtin oracle_loglik_dense (100 instances)", "-", worst, 1e-8, worst <= 1e-8);
    } else if (builtin.name == "determinism") {
      if (!acase.config) throw std::runtime_error("determinism builtin needs a config");
      const auto grid = build_scenario_grid(acase.config->seed, acase.config->overrides);
      for (const auto& cfg : grid) {
        RunOptions serial;
        serial.parallelism = 1;
        RunOptions wide;
        wide.parallelism = 8;
        const ScenarioResult a = run_scenario(cfg, serial);
        const ScenarioResult b = run_scenario(cfg, wide);
        std::ostringstream csv_a, csv_b;
        write_records_csv(csv_a, a.records);
        write_records_csv(csv_b, b.records);
        const bool identical = csv_a.str() == csv_b.str();
        push("builtin determinism parallelism 1 vs 8", std::to_string(cfg.scenario_index),
             identical ? 1.0 : 0.0, 1.0, identical);
      }
    } else if (builtin.name == "mmi_recovery") {
      run_mmi_recovery(case_name, push);
    } else if (builtin.name == "mmi_stationarity") {
      run_mmi_stationarity(case_name, push);
    } else if (builtin.name == "observed_cells") {
      if (runs.empty()) throw std::runtime_error("observed_cells builtin needs a config");
      int violations = 0;
      for (const auto& run : runs) violations += run.result.observed_cell_violations;
      push("builtin observed_cells (hash before/after)", "-", violations, 0.0, violations == 0);
    } else {
      throw std::runtime_error("unknown builtin: " + builtin.name);
    }
  }

  template <typename Push>
  void run_mmi_recovery(const std::string&, const Push& push) {
    ScenarioConfig cfg;
    cfg.design.label = "recovery";
    cfg.design.n_clusters = 100;
    cfg.design.size_rule = {SizeRule::Kind::fixed, 20, 0.0, 0.0};
    cfg.gen.sigma = {1.0, 0.9};
    cfg.gen.tau = {0.55, 0.5};
    cfg.gen.rho = 0.4;
    cfg.gen.phi = 0.45;
    RngStream gen_stream = make_stream(9100, 0, 0, "mmi-recovery");
    const TrialDataset complete = generate_dataset(cfg, gen_stream);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::individual;
    spec.eta = {1.0, 1.0};
    const double alpha0 = calibrate_alpha0(Mechanism::individual, 1.0, 0.2);
    spec.alpha0 = {{{alpha0, alpha0}, {alpha0, alpha0}}};
    spec.target_pi = {{{0.2, 0.2}, {0.2, 0.2}}};
    RngStream miss_stream = make_stream(9100, 0, 1, "mmi-recovery");
    const TrialDataset observed = impose_missingness(complete, spec, miss_stream);

    RngStream gibbs_stream = make_stream(9100, 0, 2, "mmi-recovery");
    MmiSampler sampler(observed, MmiPriors{}, gibbs_stream);
    for (int i = 0; i < 300; ++i) sampler.step();
    Eigen::Matrix2d sigma_mean = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d psi_mean = Eigen::Matrix2d::Zero();
    const int draws = 1500;
    for (int i = 0; i < draws; ++i) {
      sampler.step();
      sigma_mean += sampler.sigma();
      psi_mean += sampler.psi();
    }
    sigma_mean /= draws;
    psi_mean /= draws;
    const Eigen::Matrix2d sigma_true = cfg.gen.level1_cov();
    const Eigen::Matrix2d psi_true = cfg.gen.level2_cov();
    double worst = 0.0;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        worst = std::max(worst,
                         std::abs(sigma_mean(r, c) - sigma_true(r, c)) / std::abs(sigma_true(r, c)));
        worst = std::max(worst,
                         std::abs(psi_mean(r, c) - psi_true(r, c)) / std::abs(psi_true(r, c)));
      }
    }
    push("builtin mmi_recovery (15% relative)", "-", worst, 0.15, worst <= 0.15);
  }

  template <typename Push>
  void run_mmi_stationarity(const std::string&, const Push& push) {
    ScenarioConfig cfg;
    cfg.design.label = "stationarity";
    cfg.design.n_clusters = 50;
    cfg.design.size_rule = {SizeRule::Kind::fixed, 10, 0.0, 0.0};
    cfg.gen.sigma = {1.0, 0.9};
    cfg.gen.tau = {0.45, 0.4};
    cfg.gen.rho = 0.4;
    cfg.gen.phi = 0.4;
    RngStream gen_stream = make_stream(9200, 0, 0, "mmi-stationarity");
    const TrialDataset complete = generate_dataset(cfg, gen_stream);

    RngStream gibbs_stream = make_stream(9200, 0, 1, "mmi-stationarity");
    MmiSampler sampler(complete, MmiPriors{}, gibbs_stream);
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(4, 2);
    for (int l = 0; l < 2; ++l) {
      gamma(0, l) = cfg.gen.intercepts[l];
      gamma(1, l) = cfg.gen.beta[l];
      gamma(2, l) = cfg.gen.nu_x[l];
      gamma(3, l) = cfg.gen.nu_w[l];
    }
    sampler.set_state(gamma, cfg.gen.level1_cov(), cfg.gen.level2_cov());

    const int draws = 2000;
    std::vector<Eigen::Matrix2d> sigma_draws;
    sigma_draws.reserve(draws);
    for (int i = 0; i < draws; ++i) {
      sampler.step();
      sigma_draws.push_back(sampler.sigma());
    }
    Eigen::Matrix2d mean = Eigen::Matrix2d::Zero();
    for (const auto& s : sigma_draws) mean += s;
    mean /= draws;
    Eigen::Matrix2d sd = Eigen::Matrix2d::Zero();
    for (const auto& s : sigma_draws) sd += (s - mean).cwiseProduct(s - mean);
    sd = (sd / (draws - 1.0)).cwiseSqrt();
    const Eigen::Matrix2d sigma_true = cfg.gen.level1_cov();
    double worst = 0.0;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        worst = std::max(worst, std::abs(mean(r, c) - sigma_true(r, c)) / sd(r, c));
    push("builtin mmi_stationarity (3 posterior sd)", "-", worst, 3.0, worst <= 3.0);
  }

  int parallelism_;
  std::map<std::string, ScenarioResult> cache_;
};

}  // namespace

bool AcceptanceReport::case_passed(const std::string& case_name) const {
  bool any = false;
  for (const auto& row : rows) {
    if (row.case_name != case_name) continue;
    any = true;
    if (!row.pass || row.errored) return false;
  }
  return any;
}

bool AcceptanceReport::all_passed() const {
  for (const auto& row : rows)
    if (!row.pass || row.errored) return false;
  return !rows.empty();
}

std::vector<AcceptanceCase> default_acceptance_suite() {
  return parse_suite_text(kDefaultSuite);
}

AcceptanceReport run_acceptance(const std::vector<AcceptanceCase>& suite, int parallelism) {
  SuiteRunner runner(parallelism);
  return runner.run(suite);
}

void write_report_csv(std::ostream& out, const AcceptanceReport& report) {
  out << "case,check,scenario,observed,bound,status,note\n";
  for (const auto& row : report.rows) {
    std::string check = row.check;
    for (auto& c : check)
      if (c == ',') c = ';';
    std::string note = row.note;
    for (auto& c : note)
      if (c == ',') c = ';';
    out << row.case_name << ',' << check << ',' << row.scenario << ','
        << format_double(row.observed) << ',' << format_double(row.bound) << ','
        << (row.errored ? "error" : row.pass ? "pass" : "fail") << ',' << note << '\n';
  }
}

}  // namespace crtmi
