#ifndef CRTMI_ANOVA_HPP
#define CRTMI_ANOVA_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace crtmi {

struct FactorSpec {
  std::string name;
  int n_levels = 2;
};

struct AnovaRow {
  std::string term;
  int df = 0;
  double sum_sq = 0.0;
  double mean_sq = 0.0;
  double f = 0.0;
};

struct AnovaTable {
  std::string measure;
  std::vector<AnovaRow> terms;
  AnovaRow residual;
  double total_ss = 0.0;  // corrected for the mean
  int total_df = 0;
};

/// Fixed-effects factorial ANOVA with all interactions up to max_order,
/// sequential (Type-I) sums of squares in the given factor order. On a
/// balanced grid the decomposition is orthogonal and order-invariant.
/// `levels` holds one row per observation with 0-based level indices.
AnovaTable factorial_anova(const std::vector<double>& response,
                           const std::vector<std::vector<int>>& levels,
                           const std::vector<FactorSpec>& factors,
                           const std::string& measure, int max_order = 4);

struct WilksRow {
  std::string term;
  int df = 0;
  double lambda = 1.0;
  double approx_f = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
};

/// MANOVA per term: Wilks Lambda = det(E)/det(E+H) with Rao's F
/// transformation. Columns of `responses` are the measures.
std::vector<WilksRow> manova_wilks(const Eigen::MatrixXd& responses,
                                   const std::vector<std::vector<int>>& levels,
                                   const std::vector<FactorSpec>& factors, int max_order = 4);

struct ScaledFRow {
  std::string method;
  std::string measure;
  std::string term;
  double scaled_value = 0.0;
};

/// Divide every F by the largest F observed for its measure, then multiply by
/// the method's proportion of unsatisfactory scenarios (the data behind the
/// influence plot).
std::vector<ScaledFRow> normalize_and_scale_f(
    const std::vector<std::pair<std::string, AnovaTable>>& tables_by_method,
    const std::map<std::string, double>& flag_proportion_by_method);

}  // namespace crtmi

#endif
