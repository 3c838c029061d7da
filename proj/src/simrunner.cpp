#include "crtmi/simrunner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "crtmi/datagen.hpp"
#include "crtmi/impute_fcs.hpp"
#include "crtmi/impute_mmi.hpp"
#include "crtmi/lmm.hpp"
#include "crtmi/pooling.hpp"
#include "crtmi/stats.hpp"

namespace crtmi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t hash_observed_cells(const TrialDataset& reference, const TrialDataset& completed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto feed = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < reference.rows.size(); ++i) {
    for (int l = 0; l < 2; ++l) {
      if (reference.rows[i].observed(l)) feed(completed.rows[i].y(l));
    }
  }
  return h;
}

struct MethodOutcome {
  ReplicateRecord y1;
  ReplicateRecord y2;
};

ReplicateRecord failed_record(const ScenarioConfig& config, int replicate, Method method,
                              int outcome, int n_failures) {
  ReplicateRecord rec;
  rec.scenario_index = config.scenario_index;
  rec.replicate = replicate;
  rec.method = method;
  rec.outcome = outcome;
  rec.estimate = kNaN;
  rec.std_error = kNaN;
  rec.df = kNaN;
  rec.ci_lower = kNaN;
  rec.ci_upper = kNaN;
  rec.converged = false;
  rec.n_imputation_failures = n_failures;
  return rec;
}

MethodOutcome analyze_single_fit(const ScenarioConfig& config, int replicate, Method method,
                                 const TrialDataset& completed, int retained_clusters) {
  const FitResult fit = fit_bivariate_lmm(completed);
  MethodOutcome out{failed_record(config, replicate, method, 0, 0),
                    failed_record(config, replicate, method, 1, 0)};
  if (!fit.converged) return out;
  const double df = std::max(1.0, static_cast<double>(retained_clusters - 2));
  const double t_crit = t_quantile_975(df);
  for (int l = 0; l < 2; ++l) {
    ReplicateRecord& rec = l == 0 ? out.y1 : out.y2;
    rec.estimate = fit.beta_hat[l];
    rec.std_error = std::sqrt(std::max(0.0, fit.beta_cov(l, l)));
    rec.df = df;
    rec.ci_lower = rec.estimate - t_crit * rec.std_error;
    rec.ci_upper = rec.estimate + t_crit * rec.std_error;
    rec.converged = true;
  }
  return out;
}

MethodOutcome analyze_multiple_imputation(const ScenarioConfig& config, int replicate,
                                          Method method, const ImputedSet& completed_sets) {
  MethodOutcome out{failed_record(config, replicate, method, 0, 0),
                    failed_record(config, replicate, method, 1, 0)};
  std::vector<double> estimates[2], variances[2];
  int n_failures = 0;
  for (const auto& completed : completed_sets) {
    const FitResult fit = fit_bivariate_lmm(completed);
    if (!fit.converged) {
      ++n_failures;
      continue;
    }
    for (int l = 0; l < 2; ++l) {
      estimates[l].push_back(fit.beta_hat[l]);
      variances[l].push_back(std::max(0.0, fit.beta_cov(l, l)));
    }
  }
  out.y1.n_imputation_failures = n_failures;
  out.y2.n_imputation_failures = n_failures;
  if (estimates[0].size() < 2) return out;
  for (int l = 0; l < 2; ++l) {
    const PooledEstimate pooled = rubin_pool(estimates[l], variances[l]);
    ReplicateRecord& rec = l == 0 ? out.y1 : out.y2;
    rec.estimate = pooled.q_bar;
    rec.std_error = std::sqrt(pooled.total);
    rec.df = pooled.df;
    rec.ci_lower = pooled.ci.first;
    rec.ci_upper = pooled.ci.second;
    rec.converged = true;
  }
  return out;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  const MissingnessSpec spec = build_missingness_spec(config);
  const int n_replicates = config.n_replicates;
  const int n_methods = static_cast<int>(config.methods.size());
  if (n_replicates < 1) throw std::invalid_argument("scenario needs at least one replicate");
  if (n_methods < 1) throw std::invalid_argument("scenario needs at least one method");

  ScenarioResult result;
  result.records.resize(static_cast<std::size_t>(n_replicates) * n_methods * 2);
  std::atomic<int> next_replicate{0};
  std::atomic<int> cell_violations{0};

  const auto run_replicate = [&](int replicate) {
    RngStream gen_stream =
        make_stream(config.master_seed, config.scenario_index, replicate, "datagen");
    const TrialDataset complete = generate_dataset(config, gen_stream);
    RngStream miss_stream =
        make_stream(config.master_seed, config.scenario_index, replicate, "missing");
    const TrialDataset observed = impose_missingness(complete, spec, miss_stream);
    const std::uint64_t reference_hash =
        options.check_observed_cells ? hash_observed_cells(observed, observed) : 0;

    const auto check_cells = [&](const ImputedSet& sets) {
      if (!options.check_observed_cells) return;
      for (const auto& completed : sets)
        if (hash_observed_cells(observed, completed) != reference_hash)
          cell_violations.fetch_add(1);
    };

    for (int mi = 0; mi < n_methods; ++mi) {
      const Method method = config.methods[mi];
      MethodOutcome outcome{failed_record(config, replicate, method, 0, 0),
                            failed_record(config, replicate, method, 1, 0)};
      try {
        switch (method) {
          case Method::CCA: {
            int dropped = 0;
            const TrialDataset reduced = cca_prepare(observed, &dropped);
            outcome = analyze_single_fit(config, replicate, method, reduced, reduced.n_clusters);
            break;
          }
          case Method::SMI:
          case Method::FMI: {
            FcsModelSpec fcs;
            fcs.variant = method == Method::SMI ? FcsModelSpec::Variant::SMI
                                                : FcsModelSpec::Variant::FMI;
            fcs.n_cycles = options.fcs_cycles;
            fcs.n_imputations = config.n_imputations;
            RngStream stream = make_stream(config.master_seed, config.scenario_index, replicate,
                                           method == Method::SMI ? "impute-smi" : "impute-fmi");
            const ImputedSet sets = fcs_impute(observed, fcs, stream);
            check_cells(sets);
            outcome = analyze_multiple_imputation(config, replicate, method, sets);
            break;
          }
          case Method::MMI: {
            RngStream stream =
                make_stream(config.master_seed, config.scenario_index, replicate, "impute-mmi");
            const ImputedSet sets =
                pan_gibbs_impute(observed, MmiPriors{}, config.n_imputations,
                                 options.mmi_burn_in, options.mmi_thin, stream);
            check_cells(sets);
            outcome = analyze_multiple_imputation(config, replicate, method, sets);
            break;
          }
        }
      } catch (const std::exception&) {
        outcome = MethodOutcome{
            failed_record(config, replicate, method, 0, config.n_imputations),
            failed_record(config, replicate, method, 1, config.n_imputations)};
      }
      const std::size_t base = (static_cast<std::size_t>(replicate) * n_methods + mi) * 2;
      result.records[base] = outcome.y1;
      result.records[base + 1] = outcome.y2;
    }
  };

  const int workers = std::max(1, options.parallelism);
  if (workers == 1) {
    for (int r = 0; r < n_replicates; ++r) run_replicate(r);
  } else {
    std::vector<std::thread> pool;
    const auto worker = [&] {
      for (;;) {
        const int r = next_replicate.fetch_add(1);
        if (r >= n_replicates) break;
        run_replicate(r);
      }
    };
    for (int k = 1; k < workers; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }
  result.observed_cell_violations = cell_violations.load();

  // Failure policy: record-and-exclude, abort the scenario past 10%.
  for (int mi = 0; mi < n_methods; ++mi) {
    int failures = 0;
    for (int r = 0; r < n_replicates; ++r) {
      const std::size_t base = (static_cast<std::size_t>(r) * n_methods + mi) * 2;
      failures += result.records[base].converged ? 0 : 1;
    }
    if (failures * 10 > n_replicates)
      throw std::runtime_error("scenario " + std::to_string(config.scenario_index) +
                               " aborted: method " + to_string(config.methods[mi]) +
                               " failed in " + std::to_string(failures) + " of " +
                               std::to_string(n_replicates) + " replicates");
  }

  for (int mi = 0; mi < n_methods; ++mi) {
    for (int l = 0; l < 2; ++l) {
      std::vector<ReplicateRecord> slice;
      slice.reserve(n_replicates);
      for (int r = 0; r < n_replicates; ++r) {
        const std::size_t base = (static_cast<std::size_t>(r) * n_methods + mi) * 2;
        slice.push_back(result.records[base + l]);
      }
      result.summaries.push_back(compute_performance(slice, config.gen.beta[l]));
    }
  }
  return result;
}

PerfSummary compute_performance(const std::vector<ReplicateRecord>& records, double true_theta) {
  std::vector<const ReplicateRecord*> converged;
  for (const auto& rec : records)
    if (rec.converged) converged.push_back(&rec);
  if (converged.size() < 2)
    throw std::invalid_argument("compute_performance requires >= 2 converged records");

  PerfSummary perf;
  perf.scenario_index = converged.front()->scenario_index;
  perf.method = converged.front()->method;
  perf.outcome = converged.front()->outcome;
  perf.n_effective = static_cast<int>(converged.size());
  const double n = static_cast<double>(converged.size());

  double sum_est = 0.0, sum_sq_err = 0.0, sum_lo = 0.0, sum_hi = 0.0;
  int covered = 0;
  for (const auto* rec : converged) {
    sum_est += rec->estimate;
    sum_sq_err += (rec->estimate - true_theta) * (rec->estimate - true_theta);
    sum_lo += rec->ci_lower;
    sum_hi += rec->ci_upper;
    covered += (rec->ci_lower <= true_theta && true_theta <= rec->ci_upper) ? 1 : 0;
  }
  const double mean_est = sum_est / n;
  perf.bias = mean_est - true_theta;
  perf.pct_bias = true_theta != 0.0 ? 100.0 * perf.bias / true_theta : kNaN;
  perf.rmse = std::sqrt(sum_sq_err / n);
  perf.coverage_rate = 100.0 * covered / n;
  perf.avg_width = sum_hi / n - sum_lo / n;

  double ss = 0.0;
  for (const auto* rec : converged) ss += (rec->estimate - mean_est) * (rec->estimate - mean_est);
  const double sd = std::sqrt(ss / (n - 1.0));
  perf.mc_error_bias = sd / std::sqrt(n);
  perf.mc_error_cr = std::sqrt(perf.coverage_rate * (100.0 - perf.coverage_rate) / n);

  perf.flag_undercoverage = perf.coverage_rate < 90.0;
  perf.flag_overcoverage = perf.coverage_rate > 97.0;
  perf.flag_biased = std::abs(perf.bias) > 1.96 * perf.mc_error_bias;
  return perf;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

const char* outcome_label(int outcome) { return outcome == 0 ? "Y1" : "Y2"; }

Method method_from_string(const std::string& s) {
  if (s == "CCA") return Method::CCA;
  if (s == "SMI") return Method::SMI;
  if (s == "FMI") return Method::FMI;
  if (s == "MMI") return Method::MMI;
  throw std::invalid_argument("unknown method: " + s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan" || s == "NA") return kNaN;
  return std::stod(s);
}

const ScenarioConfig& scenario_by_index(const std::vector<ScenarioConfig>& scenarios,
                                        int index) {
  for (const auto& s : scenarios)
    if (s.scenario_index == index) return s;
  throw std::invalid_argument("scenario index " + std::to_string(index) + " not in manifest");
}

}  // namespace

void write_records_csv(std::ostream& out, const std::vector<ReplicateRecord>& records) {
  out << "scenario_index,replicate,method,outcome,estimate,std_error,df,ci_lower,ci_upper,"
         "converged,n_imputation_failures\n";
  for (const auto& rec : records) {
    out << rec.scenario_index << ',' << rec.replicate << ',' << to_string(rec.method) << ','
        << outcome_label(rec.outcome) << ',' << format_double(rec.estimate) << ','
        << format_double(rec.std_error) << ',' << format_double(rec.df) << ','
        << format_double(rec.ci_lower) << ',' << format_double(rec.ci_upper) << ','
        << (rec.converged ? 1 : 0) << ',' << rec.n_imputation_failures << '\n';
  }
}

std::vector<ReplicateRecord> read_records_csv(std::istream& in) {
  std::vector<ReplicateRecord> records;
  std::string line;
  if (!std::getline(in, line)) return records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw std::runtime_error("malformed records row: " + line);
    ReplicateRecord rec;
    rec.scenario_index = std::stoi(f[0]);
    rec.replicate = std::stoi(f[1]);
    rec.method = method_from_string(f[2]);
    rec.outcome = f[3] == "Y1" ? 0 : 1;
    rec.estimate = parse_double(f[4]);
    rec.std_error = parse_double(f[5]);
    rec.df = parse_double(f[6]);
    rec.ci_lower = parse_double(f[7]);
    rec.ci_upper = parse_double(f[8]);
    rec.converged = f[9] == "1";
    rec.n_imputation_failures = std::stoi(f[10]);
    records.push_back(rec);
  }
  return records;
}

void write_scenario_manifest_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios) {
  out << "scenario_index,design,icc1,icc2,mechanism,eta,nonresponse,M,N,seed,methods,"
         "beta1,beta2,intercept1,intercept2,nu_x1,nu_x2,nu_w1,nu_w2,rho,phi,total_var1,"
         "total_var2\n";
  for (const auto& s : scenarios) {
    std::string methods;
    for (const auto& m : s.methods) {
      if (!methods.empty()) methods += ';';
      methods += to_string(m);
    }
    out << s.scenario_index << ',' << s.design.label << ',' << format_double(s.icc[0]) << ','
        << format_double(s.icc[1]) << ',' << to_string(s.mechanism) << ',' << to_string(s.eta)
        << ',' << to_string(s.nonresponse) << ',' << s.n_imputations << ',' << s.n_replicates
        << ',' << s.master_seed << ',' << methods << ',' << format_double(s.gen.beta[0]) << ','
        << format_double(s.gen.beta[1]) << ',' << format_double(s.gen.intercepts[0]) << ','
        << format_double(s.gen.intercepts[1]) << ',' << format_double(s.gen.nu_x[0]) << ','
        << format_double(s.gen.nu_x[1]) << ',' << format_double(s.gen.nu_w[0]) << ','
        << format_double(s.gen.nu_w[1]) << ',' << format_double(s.gen.rho) << ','
        << format_double(s.gen.phi) << ',' << format_double(s.gen.total_var[0]) << ','
        << format_double(s.gen.total_var[1]) << '\n';
  }
}

std::vector<ScenarioConfig> read_scenario_manifest_csv(std::istream& in) {
  std::vector<ScenarioConfig> scenarios;
  std::string line;
  if (!std::getline(in, line)) return scenarios;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 23) throw std::runtime_error("malformed manifest row: " + line);
    ScenarioConfig s;
    s.scenario_index = std::stoi(f[0]);
    for (const auto& d : canonical_designs())
      if (d.label == f[1]) s.design = d;
    if (s.design.label != f[1]) throw std::runtime_error("unknown design: " + f[1]);
    s.icc = {parse_double(f[2]), parse_double(f[3])};
    if (f[4] == "individual") s.mechanism = Mechanism::individual;
    else if (f[4] == "cluster") s.mechanism = Mechanism::cluster;
    else if (f[4] == "both") s.mechanism = Mechanism::both;
    else if (f[4] == "treatment") s.mechanism = Mechanism::treatment;
    else throw std::runtime_error("unknown mechanism: " + f[4]);
    s.eta = f[5] == "low" ? EtaLevel::low : EtaLevel::high;
    s.nonresponse = f[6] == "equal" ? NonresponseLevel::equal : NonresponseLevel::different;
    s.n_imputations = std::stoi(f[7]);
    s.n_replicates = std::stoi(f[8]);
    s.master_seed = std::stoull(f[9]);
    s.methods.clear();
    std::istringstream ms(f[10]);
    std::string token;
    while (std::getline(ms, token, ';')) s.methods.push_back(method_from_string(token));
    s.gen.beta = {parse_double(f[11]), parse_double(f[12])};
    s.gen.intercepts = {parse_double(f[13]), parse_double(f[14])};
    s.gen.nu_x = {parse_double(f[15]), parse_double(f[16])};
    s.gen.nu_w = {parse_double(f[17]), parse_double(f[18])};
    s.gen.rho = parse_double(f[19]);
    s.gen.phi = parse_double(f[20]);
    s.gen.total_var = {parse_double(f[21]), parse_double(f[22])};
    for (int l = 0; l < 2; ++l) {
      const auto [tau_sq, sigma_sq] = variance_components_from_icc(s.icc[l], s.gen.total_var[l]);
      s.gen.tau[l] = std::sqrt(tau_sq);
      s.gen.sigma[l] = std::sqrt(sigma_sq);
    }
    scenarios.push_back(std::move(s));
  }
  return scenarios;
}

void write_summary_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                       const std::vector<PerfSummary>& summaries) {
  out << "scenario_index,design,icc1,icc2,mechanism,eta,nonresponse,method,outcome,n_effective,"
         "coverage_rate,bias,pct_bias,rmse,avg_width,mc_error_bias,mc_error_cr,"
         "flag_undercoverage,flag_overcoverage,flag_biased\n";
  for (const auto& p : summaries) {
    const ScenarioConfig& s = scenario_by_index(scenarios, p.scenario_index);
    out << p.scenario_index << ',' << s.design.label << ',' << format_double(s.icc[0]) << ','
        << format_double(s.icc[1]) << ',' << to_string(s.mechanism) << ',' << to_string(s.eta)
        << ',' << to_string(s.nonresponse) << ',' << to_string(p.method) << ','
        << outcome_label(p.outcome) << ',' << p.n_effective << ','
        << format_double(p.coverage_rate) << ',' << format_double(p.bias) << ','
        << (std::isnan(p.pct_bias) ? "NA" : format_double(p.pct_bias)) << ','
        << format_double(p.rmse) << ',' << format_double(p.avg_width) << ','
        << format_double(p.mc_error_bias) << ',' << format_double(p.mc_error_cr) << ','
        << (p.flag_undercoverage ? 1 : 0) << ',' << (p.flag_overcoverage ? 1 : 0) << ','
        << (p.flag_biased ? 1 : 0) << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  std::vector<SummaryRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 20) throw std::runtime_error("malformed summary row: " + line);
    SummaryRow row;
    row.perf.scenario_index = std::stoi(f[0]);
    row.design = f[1];
    row.icc1 = parse_double(f[2]);
    row.icc2 = parse_double(f[3]);
    row.mechanism = f[4];
    row.eta = f[5];
    row.nonresponse = f[6];
    row.method = f[7];
    row.perf.method = method_from_string(f[7]);
    row.outcome = f[8];
    row.perf.outcome = f[8] == "Y1" ? 0 : 1;
    row.perf.n_effective = std::stoi(f[9]);
    row.perf.coverage_rate = parse_double(f[10]);
    row.perf.bias = parse_double(f[11]);
    row.perf.pct_bias = parse_double(f[12]);
    row.perf.rmse = parse_double(f[13]);
    row.perf.avg_width = parse_double(f[14]);
    row.perf.mc_error_bias = parse_double(f[15]);
    row.perf.mc_error_cr = parse_double(f[16]);
    row.perf.flag_undercoverage = f[17] == "1";
    row.perf.flag_overcoverage = f[18] == "1";
    row.perf.flag_biased = f[19] == "1";
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_pct_bias_table_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                              const std::vector<PerfSummary>& summaries) {
  out << "design,eta,nonresponse,icc1,icc2,mechanism,method,outcome,pct_bias\n";
  for (const auto& p : summaries) {
    const ScenarioConfig& s = scenario_by_index(scenarios, p.scenario_index);
    out << s.design.label << ',' << to_string(s.eta) << ',' << to_string(s.nonresponse) << ','
        << format_double(s.icc[0]) << ',' << format_double(s.icc[1]) << ','
        << to_string(s.mechanism) << ',' << to_string(p.method) << ','
        << outcome_label(p.outcome) << ','
        << (std::isnan(p.pct_bias) ? "NA" : format_double(p.pct_bias)) << '\n';
  }
}

void write_cr_aw_table_csv(std::ostream& out, const std::vector<ScenarioConfig>& scenarios,
                           const std::vector<PerfSummary>& summaries) {
  out << "design,eta,nonresponse,icc1,icc2,mechanism,method,outcome,coverage_rate,avg_width,"
         "flag_undercoverage,flag_overcoverage\n";
  for (const auto& p : summaries) {
    const ScenarioConfig& s = scenario_by_index(scenarios, p.scenario_index);
    out << s.design.label << ',' << to_string(s.eta) << ',' << to_string(s.nonresponse) << ','
        << format_double(s.icc[0]) << ',' << format_double(s.icc[1]) << ','
        << to_string(s.mechanism) << ',' << to_string(p.method) << ','
        << outcome_label(p.outcome) << ',' << format_double(p.coverage_rate) << ','
        << format_double(p.avg_width) << ',' << (p.flag_undercoverage ? 1 : 0) << ','
        << (p.flag_overcoverage ? 1 : 0) << '\n';
  }
}

}  // namespace crtmi
