#include "crtmi/anova.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace crtmi {

namespace {

struct Term {
  std::string name;
  std::vector<int> factor_ids;
  int df = 0;
};

/// All non-empty factor subsets of size <= max_order, ordered by interaction
/// order then lexicographically by factor position.
std::vector<Term> enumerate_terms(const std::vector<FactorSpec>& factors, int max_order) {
  const int f = static_cast<int>(factors.size());
  std::vector<Term> terms;
  for (int order = 1; order <= std::min(max_order, f); ++order) {
    std::vector<int> pick(order);
    for (int i = 0; i < order; ++i) pick[i] = i;
    for (;;) {
      Term term;
      term.df = 1;
      for (int id : pick) {
        if (!term.name.empty()) term.name += ':';
        term.name += factors[id].name;
        term.factor_ids.push_back(id);
        term.df *= factors[id].n_levels - 1;
      }
      terms.push_back(std::move(term));
      int pos = order - 1;
      while (pos >= 0 && pick[pos] == f - order + pos) --pos;
      if (pos < 0) break;
      ++pick[pos];
      for (int i = pos + 1; i < order; ++i) pick[i] = pick[i - 1] + 1;
    }
  }
  return terms;
}

/// Model matrix with an intercept followed by treatment-dummy columns per
/// term (interaction columns are elementwise products). Sequential SS only
/// depends on the subspaces spanned, not on the dummy coding.
Eigen::MatrixXd build_design(const std::vector<Term>& terms,
                             const std::vector<std::vector<int>>& levels,
                             const std::vector<FactorSpec>& factors) {
  const int n = static_cast<int>(levels.size());
  int n_cols = 1;
  for (const auto& term : terms) n_cols += term.df;
  Eigen::MatrixXd design(n, n_cols);
  design.col(0).setOnes();
  int col = 1;
  for (const auto& term : terms) {
    std::vector<int> contrast(term.factor_ids.size(), 1);
    for (int c = 0; c < term.df; ++c) {
      for (int i = 0; i < n; ++i) {
        double value = 1.0;
        for (std::size_t k = 0; k < term.factor_ids.size(); ++k)
          value *= levels[i][term.factor_ids[k]] == contrast[k] ? 1.0 : 0.0;
        design(i, col) = value;
      }
      ++col;
      // advance the mixed-radix contrast counter (levels 1..L-1 per factor)
      for (int k = static_cast<int>(term.factor_ids.size()) - 1; k >= 0; --k) {
        if (++contrast[k] < factors[term.factor_ids[k]].n_levels) break;
        contrast[k] = 1;
      }
    }
  }
  return design;
}

void validate_inputs(std::size_t n, const std::vector<std::vector<int>>& levels,
                     const std::vector<FactorSpec>& factors) {
  if (levels.size() != n) throw std::invalid_argument("response/levels size mismatch");
  for (const auto& row : levels) {
    if (row.size() != factors.size())
      throw std::invalid_argument("level row arity mismatch");
    for (std::size_t k = 0; k < row.size(); ++k)
      if (row[k] < 0 || row[k] >= factors[k].n_levels)
        throw std::invalid_argument("level index out of range");
  }
}

}  // namespace

AnovaTable factorial_anova(const std::vector<double>& response,
                           const std::vector<std::vector<int>>& levels,
                           const std::vector<FactorSpec>& factors,
                           const std::string& measure, int max_order) {
  const int n = static_cast<int>(response.size());
  validate_inputs(response.size(), levels, factors);
  const std::vector<Term> terms = enumerate_terms(factors, max_order);
  int model_df = 0;
  for (const auto& term : terms) model_df += term.df;
  const int residual_df = n - 1 - model_df;
  if (residual_df < 1) throw std::invalid_argument("saturated model");

  const Eigen::MatrixXd design = build_design(terms, levels, factors);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(response.data(), n);

  // Householder QR without pivoting: the squared entries of Q'y give the
  // sequential sum of squares absorbed by each successive column.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  Eigen::VectorXd qty = y;
  qty.applyOnTheLeft(qr.householderQ().adjoint());

  const double mean = y.mean();
  const double total_ss = (y.array() - mean).square().sum();

  AnovaTable table;
  table.measure = measure;
  table.total_df = n - 1;
  table.total_ss = total_ss;

  int col = 1;  // column 0 is the intercept
  double model_ss = 0.0;
  for (const auto& term : terms) {
    AnovaRow row;
    row.term = term.name;
    row.df = term.df;
    for (int c = 0; c < term.df; ++c, ++col) row.sum_sq += qty(col) * qty(col);
    row.mean_sq = row.sum_sq / row.df;
    model_ss += row.sum_sq;
    table.terms.push_back(row);
  }

  table.residual.term = "residual";
  table.residual.df = residual_df;
  table.residual.sum_sq = std::max(0.0, total_ss - model_ss);
  table.residual.mean_sq = table.residual.sum_sq / residual_df;
  for (auto& row : table.terms) {
    if (table.residual.mean_sq > 0.0) {
      row.f = row.mean_sq / table.residual.mean_sq;
    } else {
      row.f = row.sum_sq > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
  }
  return table;
}

std::vector<WilksRow> manova_wilks(const Eigen::MatrixXd& responses,
                                   const std::vector<std::vector<int>>& levels,
                                   const std::vector<FactorSpec>& factors, int max_order) {
  const int n = static_cast<int>(responses.rows());
  const int p = static_cast<int>(responses.cols());
  if (p < 2) throw std::invalid_argument("manova requires >= 2 measures");
  validate_inputs(static_cast<std::size_t>(n), levels, factors);
  const std::vector<Term> terms = enumerate_terms(factors, max_order);
  int model_df = 0;
  for (const auto& term : terms) model_df += term.df;
  const int residual_df = n - 1 - model_df;
  if (residual_df < 1) throw std::invalid_argument("saturated model");

  const Eigen::MatrixXd design = build_design(terms, levels, factors);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  Eigen::MatrixXd qty = responses;
  qty.applyOnTheLeft(qr.householderQ().adjoint());

  const int n_cols = static_cast<int>(design.cols());
  const Eigen::MatrixXd residual_block = qty.bottomRows(n - n_cols);
  const Eigen::MatrixXd e = residual_block.transpose() * residual_block;
  const double det_e = e.determinant();
  if (!(det_e > 0.0)) throw std::runtime_error("degenerate residual structure");

  std::vector<WilksRow> rows;
  int col = 1;
  for (const auto& term : terms) {
    const Eigen::MatrixXd block = qty.middleRows(col, term.df);
    col += term.df;
    const Eigen::MatrixXd h = block.transpose() * block;
    WilksRow row;
    row.term = term.name;
    row.df = term.df;
    row.lambda = det_e / (e + h).determinant();

    // Rao's approximate F transformation.
    const double q = term.df;
    const double v = residual_df;
    const double pq = p * q;
    const double denom = p * p + q * q - 5.0;
    const double t = denom > 0.0 ? std::sqrt((pq * pq - 4.0) / denom) : 1.0;
    const double w = v - 0.5 * (p - q + 1.0);
    const double u = (pq - 2.0) / 4.0;
    row.df1 = pq;
    row.df2 = w * t - 2.0 * u;
    const double lam_root = std::pow(row.lambda, 1.0 / t);
    row.approx_f = lam_root > 0.0 ? (1.0 - lam_root) / lam_root * row.df2 / row.df1
                                  : std::numeric_limits<double>::infinity();
    rows.push_back(row);
  }
  return rows;
}

std::vector<ScaledFRow> normalize_and_scale_f(
    const std::vector<std::pair<std::string, AnovaTable>>& tables_by_method,
    const std::map<std::string, double>& flag_proportion_by_method) {
  std::map<std::string, double> max_f_by_measure;
  for (const auto& [method, table] : tables_by_method) {
    double& max_f = max_f_by_measure[table.measure];
    for (const auto& row : table.terms)
      if (std::isfinite(row.f)) max_f = std::max(max_f, row.f);
  }
  std::vector<ScaledFRow> rows;
  for (const auto& [method, table] : tables_by_method) {
    const auto prop_it = flag_proportion_by_method.find(method);
    const double proportion = prop_it == flag_proportion_by_method.end() ? 1.0 : prop_it->second;
    const double max_f = max_f_by_measure[table.measure];
    for (const auto& row : table.terms) {
      ScaledFRow out;
      out.method = method;
      out.measure = table.measure;
      out.term = row.term;
      if (max_f > 0.0 && std::isfinite(row.f)) {
        out.scaled_value = row.f / max_f * proportion;
      } else if (!std::isfinite(row.f)) {
        out.scaled_value = proportion;  // an infinite F dominates its measure
      } else {
        out.scaled_value = 0.0;
      }
      rows.push_back(std::move(out));
    }
  }
  return rows;
}

}  // namespace crtmi
