#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "crtmi/acceptance.hpp"
#include "crtmi/anova.hpp"
#include "crtmi/config_file.hpp"
#include "crtmi/missingness.hpp"
#include "crtmi/simrunner.hpp"

namespace fs = std::filesystem;
using namespace crtmi;

namespace {

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
            bool seed_given, int replicates, int parallelism, const std::string& scenario_list,
            const std::string& method_list) {
  RunConfig config;
  if (!config_path.empty()) config = load_config_file(config_path);
  if (seed_given) config.seed = seed;
  if (replicates > 0) config.overrides.n_replicates = replicates;
  if (!method_list.empty()) {
    std::vector<Method> methods;
    std::istringstream in(method_list);
    std::string token;
    while (std::getline(in, token, ',')) {
      if (token == "CCA") methods.push_back(Method::CCA);
      else if (token == "SMI") methods.push_back(Method::SMI);
      else if (token == "FMI") methods.push_back(Method::FMI);
      else if (token == "MMI") methods.push_back(Method::MMI);
      else throw std::runtime_error("unknown method: " + token);
    }
    config.overrides.methods = methods;
  }

  std::vector<ScenarioConfig> grid = build_scenario_grid(config.seed, config.overrides);
  if (!scenario_list.empty()) {
    std::vector<int> wanted;
    std::istringstream in(scenario_list);
    std::string token;
    while (std::getline(in, token, ',')) wanted.push_back(std::stoi(token));
    std::vector<ScenarioConfig> filtered;
    for (const auto& cfg : grid)
      if (std::find(wanted.begin(), wanted.end(), cfg.scenario_index) != wanted.end())
        filtered.push_back(cfg);
    grid = std::move(filtered);
  }
  if (grid.empty()) throw std::runtime_error("no scenarios selected");

  RunOptions options;
  options.parallelism = parallelism > 0
                            ? parallelism
                            : static_cast<int>(std::thread::hardware_concurrency());

  std::vector<ReplicateRecord> all_records;
  std::vector<PerfSummary> all_summaries;
  int failed_scenarios = 0;
  for (const auto& cfg : grid) {
    std::cerr << "scenario " << cfg.scenario_index << " (" << cfg.design.label << ", icc "
              << cfg.icc[0] << "/" << cfg.icc[1] << ", " << to_string(cfg.mechanism) << ", eta "
              << to_string(cfg.eta) << ", " << to_string(cfg.nonresponse) << ") N="
              << cfg.n_replicates << "\n";
    try {
      ScenarioResult result = run_scenario(cfg, options);
      all_records.insert(all_records.end(), result.records.begin(), result.records.end());
      all_summaries.insert(all_summaries.end(), result.summaries.begin(),
                           result.summaries.end());
    } catch (const std::exception& err) {
      ++failed_scenarios;
      std::cerr << "  ERROR: " << err.what() << "\n";
    }
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "records.csv");
    write_records_csv(out, all_records);
  }
  {
    auto out = open_out(dir / "scenarios.csv");
    write_scenario_manifest_csv(out, grid);
  }
  {
    auto out = open_out(dir / "summary.csv");
    write_summary_csv(out, grid, all_summaries);
  }
  {
    auto out = open_out(dir / "table3_pct_bias.csv");
    write_pct_bias_table_csv(out, grid, all_summaries);
  }
  {
    auto out = open_out(dir / "table4_cr_aw.csv");
    write_cr_aw_table_csv(out, grid, all_summaries);
  }
  std::cerr << "wrote " << all_records.size() << " records for " << grid.size() - failed_scenarios
            << " scenarios to " << dir << "\n";
  return failed_scenarios == 0 ? 0 : 1;
}

int cmd_calibrate(const std::string& mechanism_name, double eta, double target,
                  const std::string& out_path) {
  Mechanism mechanism;
  if (mechanism_name == "individual") mechanism = Mechanism::individual;
  else if (mechanism_name == "cluster") mechanism = Mechanism::cluster;
  else if (mechanism_name == "both") mechanism = Mechanism::both;
  else if (mechanism_name == "treatment") mechanism = Mechanism::treatment;
  else throw std::runtime_error("unknown mechanism: " + mechanism_name);

  const double alpha0 = calibrate_alpha0(mechanism, eta, target);
  std::ostringstream csv;
  csv << "mechanism,eta,target,alpha0\n"
      << mechanism_name << ',' << format_double(eta) << ',' << format_double(target) << ','
      << format_double(alpha0) << '\n';
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    auto out = open_out(out_path);
    out << csv.str();
  }
  return 0;
}

int cmd_summarize(const std::string& in_dir, const std::string& out_dir) {
  const fs::path in(in_dir);
  std::ifstream records_in(in / "records.csv");
  if (!records_in) throw std::runtime_error("missing records.csv in " + in_dir);
  std::ifstream manifest_in(in / "scenarios.csv");
  if (!manifest_in) throw std::runtime_error("missing scenarios.csv in " + in_dir);
  const auto records = read_records_csv(records_in);
  const auto scenarios = read_scenario_manifest_csv(manifest_in);

  // Regroup records per scenario x method x outcome and recompute measures.
  std::map<std::tuple<int, int, int>, std::vector<ReplicateRecord>> groups;
  for (const auto& rec : records)
    groups[{rec.scenario_index, static_cast<int>(rec.method), rec.outcome}].push_back(rec);
  std::vector<PerfSummary> summaries;
  for (const auto& [key, recs] : groups) {
    const auto& [scenario_index, method, outcome] = key;
    const auto cfg_it =
        std::find_if(scenarios.begin(), scenarios.end(), [&, si = scenario_index](const auto& s) {
          return s.scenario_index == si;
        });
    if (cfg_it == scenarios.end())
      throw std::runtime_error("records reference scenario missing from manifest");
    summaries.push_back(compute_performance(recs, cfg_it->gen.beta[outcome]));
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "summary.csv");
    write_summary_csv(out, scenarios, summaries);
  }
  {
    auto out = open_out(dir / "table3_pct_bias.csv");
    write_pct_bias_table_csv(out, scenarios, summaries);
  }
  {
    auto out = open_out(dir / "table4_cr_aw.csv");
    write_cr_aw_table_csv(out, scenarios, summaries);
  }
  std::cerr << "summarised " << records.size() << " records into " << dir << "\n";
  return 0;
}

struct AnovaInput {
  std::vector<double> response;
  std::vector<std::vector<int>> levels;
  Eigen::MatrixXd measures;  // bias, cr, rmse, aw columns for MANOVA
  int flagged = 0;
  int total = 0;
};

int level_index(std::vector<std::string>& seen, const std::string& value) {
  const auto it = std::find(seen.begin(), seen.end(), value);
  if (it != seen.end()) return static_cast<int>(it - seen.begin());
  seen.push_back(value);
  return static_cast<int>(seen.size()) - 1;
}

int cmd_anova(const std::string& in_dir, const std::string& measure, const std::string& outcome,
              const std::string& out_path) {
  std::ifstream in(fs::path(in_dir) / "summary.csv");
  if (!in) throw std::runtime_error("missing summary.csv in " + in_dir);
  const auto rows = read_summary_csv(in);

  // Canonical factor order: design, icc, mechanism, eta, nonresponse.
  std::vector<std::string> design_levels, icc_levels, mech_levels, eta_levels, nr_levels;
  std::map<std::string, AnovaInput> by_method;
  for (const auto& row : rows) {
    if (row.outcome != outcome) continue;
    AnovaInput& input = by_method[row.method];
    const std::string icc_label =
        format_double(row.icc1) + "/" + format_double(row.icc2);
    input.levels.push_back({level_index(design_levels, row.design),
                            level_index(icc_levels, icc_label),
                            level_index(mech_levels, row.mechanism),
                            level_index(eta_levels, row.eta),
                            level_index(nr_levels, row.nonresponse)});
    double value = 0.0;
    bool flagged = false;
    if (measure == "bias") {
      value = row.perf.bias;
      flagged = row.perf.flag_biased;
    } else if (measure == "coverage") {
      value = row.perf.coverage_rate;
      flagged = row.perf.flag_undercoverage || row.perf.flag_overcoverage;
    } else if (measure == "rmse") {
      value = row.perf.rmse;
    } else if (measure == "aw") {
      value = row.perf.avg_width;
    } else {
      throw std::runtime_error("unknown measure: " + measure);
    }
    input.response.push_back(value);
    input.flagged += flagged ? 1 : 0;
    input.total += 1;
    input.measures.conservativeResize(input.total, 4);
    input.measures.row(input.total - 1) << row.perf.bias, row.perf.coverage_rate, row.perf.rmse,
        row.perf.avg_width;
  }
  if (by_method.empty()) throw std::runtime_error("no summary rows for outcome " + outcome);

  const std::vector<FactorSpec> factors{
      {"design", static_cast<int>(design_levels.size())},
      {"icc", static_cast<int>(icc_levels.size())},
      {"mechanism", static_cast<int>(mech_levels.size())},
      {"eta", static_cast<int>(eta_levels.size())},
      {"nonresponse", static_cast<int>(nr_levels.size())}};
  std::vector<FactorSpec> used;
  for (const auto& f : factors)
    if (f.n_levels >= 2) used.push_back(f);
  std::vector<int> used_ids;
  for (std::size_t i = 0; i < factors.size(); ++i)
    if (factors[i].n_levels >= 2) used_ids.push_back(static_cast<int>(i));

  std::vector<std::pair<std::string, AnovaTable>> tables;
  std::map<std::string, double> proportions;
  std::ostringstream anova_csv, manova_csv;
  anova_csv << "method,measure,term,df,sum_sq,mean_sq,f\n";
  manova_csv << "method,term,df,wilks_lambda,approx_f,df1,df2\n";
  for (auto& [method, input] : by_method) {
    std::vector<std::vector<int>> reduced;
    reduced.reserve(input.levels.size());
    for (const auto& row : input.levels) {
      std::vector<int> r;
      for (int id : used_ids) r.push_back(row[id]);
      reduced.push_back(std::move(r));
    }
    const AnovaTable table = factorial_anova(input.response, reduced, used, measure, 4);
    for (const auto& row : table.terms)
      anova_csv << method << ',' << measure << ',' << row.term << ',' << row.df << ','
                << format_double(row.sum_sq) << ',' << format_double(row.mean_sq) << ','
                << format_double(row.f) << '\n';
    anova_csv << method << ',' << measure << ",residual," << table.residual.df << ','
              << format_double(table.residual.sum_sq) << ','
              << format_double(table.residual.mean_sq) << ",\n";
    tables.emplace_back(method, table);
    proportions[method] = (measure == "bias" || measure == "coverage")
                              ? static_cast<double>(input.flagged) / input.total
                              : 1.0;
    for (const auto& row : manova_wilks(input.measures, reduced, used, 4))
      manova_csv << method << ',' << row.term << ',' << row.df << ','
                 << format_double(row.lambda) << ',' << format_double(row.approx_f) << ','
                 << format_double(row.df1) << ',' << format_double(row.df2) << '\n';
  }

  const auto scaled = normalize_and_scale_f(tables, proportions);
  std::ostringstream scaled_csv;
  scaled_csv << "method,measure,term,scaled_value\n";
  for (const auto& row : scaled)
    scaled_csv << row.method << ',' << row.measure << ',' << row.term << ','
               << format_double(row.scaled_value) << '\n';

  const fs::path base(out_path);
  {
    auto out = open_out(base);
    out << anova_csv.str();
  }
  fs::path scaled_path = base;
  scaled_path.replace_filename(base.stem().string() + "_scaled.csv");
  {
    auto out = open_out(scaled_path);
    out << scaled_csv.str();
  }
  fs::path manova_path = base;
  manova_path.replace_filename(base.stem().string() + "_manova.csv");
  {
    auto out = open_out(manova_path);
    out << manova_csv.str();
  }
  std::cerr << "wrote " << base << ", " << scaled_path << ", " << manova_path << "\n";
  return 0;
}

int cmd_acceptance(const std::string& suite_path, const std::string& out_path, int parallelism) {
  const std::vector<AcceptanceCase> suite =
      suite_path == "default" ? default_acceptance_suite() : load_suite_file(suite_path);
  const int workers = parallelism > 0
                          ? parallelism
                          : static_cast<int>(std::thread::hardware_concurrency());
  const AcceptanceReport report = run_acceptance(suite, workers);
  {
    auto out = open_out(out_path);
    write_report_csv(out, report);
  }
  bool all = true;
  for (const auto& acase : suite) {
    const bool pass = report.case_passed(acase.name);
    all = all && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << acase.name << "\n";
  }
  std::cout << (all ? "acceptance suite passed" : "acceptance suite FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation study of multiple-imputation strategies for bivariate outcomes in "
               "cluster randomised trials"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", scenario_list, method_list;
  std::uint64_t seed = 42;
  int replicates = 0, parallelism = 0;
  auto* run = app.add_subcommand("run", "Run scenarios and write records + summaries");
  run->add_option("--config", config_path, "Scenario config file");
  run->add_option("--out", out_dir, "Output directory");
  auto* seed_opt = run->add_option("--seed", seed, "Master seed (overrides config)");
  run->add_option("--replicates", replicates, "Replicates per scenario (overrides config)");
  run->add_option("--parallelism", parallelism, "Worker threads (default: hardware)");
  run->add_option("--scenarios", scenario_list, "Comma-separated scenario indices");
  run->add_option("--methods", method_list, "Comma-separated methods (CCA,SMI,FMI,MMI)");

  std::string mechanism = "individual", cal_out;
  double eta = 1.0, target = 0.2;
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the logistic intercept");
  calibrate->add_option("--mechanism", mechanism, "individual|cluster|both|treatment");
  calibrate->add_option("--eta", eta, "Association strength");
  calibrate->add_option("--target", target, "Target non-response probability");
  calibrate->add_option("--out", cal_out, "Output CSV (default: stdout)");

  std::string sum_in, sum_out = "out";
  auto* summarize = app.add_subcommand("summarize", "Recompute summaries from records");
  summarize->add_option("--in", sum_in, "Directory with records.csv and scenarios.csv")
      ->required();
  summarize->add_option("--out", sum_out, "Output directory");

  std::string anova_in, anova_measure = "bias", anova_outcome = "Y1",
              anova_out = "anova.csv";
  auto* anova = app.add_subcommand("anova", "Factorial ANOVA of the performance measures");
  anova->add_option("--in", anova_in, "Directory with summary.csv")->required();
  anova->add_option("--measure", anova_measure, "bias|coverage|rmse|aw");
  anova->add_option("--outcome", anova_outcome, "Y1|Y2");
  anova->add_option("--out", anova_out, "Output CSV path");

  std::string suite_path = "default", report_path = "report.csv";
  int accept_parallelism = 0;
  auto* acceptance = app.add_subcommand("acceptance", "Run the acceptance suite");
  acceptance->add_option("--suite", suite_path, "Suite file, or 'default'");
  acceptance->add_option("--out", report_path, "Report CSV path");
  acceptance->add_option("--parallelism", accept_parallelism, "Worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, out_dir, seed, seed_opt->count() > 0, replicates, parallelism,
                     scenario_list, method_list);
    if (calibrate->parsed()) return cmd_calibrate(mechanism, eta, target, cal_out);
    if (summarize->parsed()) return cmd_summarize(sum_in, sum_out);
    if (anova->parsed()) return cmd_anova(anova_in, anova_measure, anova_outcome, anova_out);
    if (acceptance->parsed()) return cmd_acceptance(suite_path, report_path, accept_parallelism);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
