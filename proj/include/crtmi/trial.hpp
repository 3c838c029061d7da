#ifndef CRTMI_TRIAL_HPP
#define CRTMI_TRIAL_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace crtmi {

enum class Mechanism { individual, cluster, both, treatment };
enum class EtaLevel { low, high };
enum class NonresponseLevel { equal, different };
enum class Method { CCA, SMI, FMI, MMI };

std::string to_string(Mechanism m);
std::string to_string(EtaLevel e);
std::string to_string(NonresponseLevel n);
std::string to_string(Method m);

/// Cluster-size rule: every cluster the same size, or sizes drawn from a
/// Gamma(mean, cv) rounded to the nearest integer with floor 2.
struct SizeRule {
  enum class Kind { fixed, gamma };
  Kind kind = Kind::fixed;
  int fixed_size = 10;
  double gamma_mean = 20.0;
  double gamma_cv = 0.5;
};

struct Design {
  std::string label;  // "many-small", "few-large", "unbalanced"
  int n_clusters = 50;
  SizeRule size_rule;
};

/// Generating parameters of the bivariate two-level normal model. The
/// variance components sigma/tau are resolved per scenario from the ICC pair
/// and the total residual variance.
struct GenParams {
  std::array<double, 2> intercepts{0.0, 0.0};
  std::array<double, 2> beta{1.0, 1.0};  // true treatment effects
  std::array<double, 2> nu_x{0.5, 0.5};  // individual-covariate loadings
  std::array<double, 2> nu_w{0.5, 0.5};  // cluster-covariate loadings
  double rho = 0.4;                      // individual-level outcome correlation
  double phi = 0.4;                      // cluster-level outcome correlation
  std::array<double, 2> total_var{1.0, 1.0};
  std::array<double, 2> sigma{0.0, 0.0};  // resolved from ICC
  std::array<double, 2> tau{0.0, 0.0};    // resolved from ICC

  Eigen::Matrix2d level1_cov() const {
    Eigen::Matrix2d s;
    s << sigma[0] * sigma[0], rho * sigma[0] * sigma[1],
        rho * sigma[0] * sigma[1], sigma[1] * sigma[1];
    return s;
  }
  Eigen::Matrix2d level2_cov() const {
    Eigen::Matrix2d p;
    p << tau[0] * tau[0], phi * tau[0] * tau[1],
        phi * tau[0] * tau[1], tau[1] * tau[1];
    return p;
  }
};

/// One factorial cell of the study.
struct ScenarioConfig {
  int scenario_index = 0;
  std::array<double, 2> icc{0.01, 0.01};
  Design design;
  Mechanism mechanism = Mechanism::individual;
  EtaLevel eta = EtaLevel::low;
  NonresponseLevel nonresponse = NonresponseLevel::equal;
  GenParams gen;
  int n_imputations = 10;   // M
  int n_replicates = 1000;  // N
  std::vector<Method> methods{Method::CCA, Method::SMI, Method::FMI, Method::MMI};
  std::uint64_t master_seed = 42;
};

struct TrialRow {
  int cluster_id = 0;  // 1-based
  int arm = 0;         // 0 control, 1 intervention
  double x = 0.0;      // individual covariate
  double w = 0.0;      // cluster covariate, constant within cluster
  double y1 = 0.0;
  double y2 = 0.0;
  bool r1 = true;  // true = observed
  bool r2 = true;

  double y(int outcome) const { return outcome == 0 ? y1 : y2; }
  bool observed(int outcome) const { return outcome == 0 ? r1 : r2; }
  void set_y(int outcome, double v) { (outcome == 0 ? y1 : y2) = v; }
  void set_observed(int outcome, bool v) { (outcome == 0 ? r1 : r2) = v; }
};

struct TrialDataset {
  std::vector<TrialRow> rows;
  int n_clusters = 0;

  bool fully_observed() const {
    for (const auto& row : rows)
      if (!row.r1 || !row.r2) return false;
    return true;
  }
};

/// M completed copies of one incomplete dataset.
using ImputedSet = std::vector<TrialDataset>;

}  // namespace crtmi

#endif
