#include "crtmi/impute_fcs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crtmi {

namespace {

constexpr int kOtherOutcomeColumn = 1;

struct CrossProducts {
  Eigen::MatrixXd gram;  // Z'Z
  Eigen::VectorXd zty;   // Z'y
  double yty = 0.0;
  int n_obs = 0;

  explicit CrossProducts(int p)
      : gram(Eigen::MatrixXd::Zero(p, p)), zty(Eigen::VectorXd::Zero(p)) {}
};

BayesDraw bayes_draw_from_cross(const CrossProducts& cp, RngStream& stream) {
  const int p = static_cast<int>(cp.gram.rows());
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cp.gram);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());

  std::vector<int> kept, dropped;
  for (int i = 0; i < p; ++i) {
    const int col = static_cast<int>(qr.colsPermutation().indices()(i));
    (i < rank ? kept : dropped).push_back(col);
  }
  std::sort(kept.begin(), kept.end());
  std::sort(dropped.begin(), dropped.end());
  if (rank == 0) throw std::runtime_error("singular imputation design");
  if (cp.n_obs <= rank) throw std::runtime_error("too few observed rows");

  Eigen::MatrixXd gram_kept(rank, rank);
  Eigen::VectorXd zty_kept(rank);
  for (int i = 0; i < rank; ++i) {
    zty_kept(i) = cp.zty(kept[i]);
    for (int j = 0; j < rank; ++j) gram_kept(i, j) = cp.gram(kept[i], kept[j]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram_kept);
  if (llt.info() != Eigen::Success) throw std::runtime_error("singular imputation design");

  const Eigen::VectorXd beta_hat = llt.solve(zty_kept);
  const double sse = std::max(0.0, cp.yty - zty_kept.dot(beta_hat));
  const double resid_df = cp.n_obs - rank;

  BayesDraw draw;
  draw.dropped_columns = dropped;
  draw.beta = Eigen::VectorXd::Zero(p);
  if (sse <= 0.0) {
    draw.sigma = 0.0;
    for (int i = 0; i < rank; ++i) draw.beta(kept[i]) = beta_hat(i);
    return draw;
  }
  const double sigma_sq = sse / draw_chi_squared(resid_df, stream);
  draw.sigma = std::sqrt(sigma_sq);
  Eigen::VectorXd z(rank);
  for (int i = 0; i < rank; ++i) z(i) = stream.normal();
  // (Z'Z)^{-1} = L^{-T} L^{-1}, so L^{-T} z has the required covariance.
  const Eigen::VectorXd scaled = llt.matrixU().solve(z);
  const Eigen::VectorXd beta_star = beta_hat + draw.sigma * scaled;
  for (int i = 0; i < rank; ++i) draw.beta(kept[i]) = beta_star(i);
  return draw;
}

/// Design row for one observation: SMI uses (1, other outcome, X, W, arm);
/// FMI uses (1, other outcome, X, cluster indicators 2..J) since the
/// indicators absorb W and arm. Rows have at most four nonzero entries under
/// FMI, which the accumulators below exploit.
class FcsDesign {
 public:
  FcsDesign(FcsModelSpec::Variant variant, int n_clusters)
      : variant_(variant), n_clusters_(n_clusters) {}

  bool smi() const { return variant_ == FcsModelSpec::Variant::SMI; }
  int n_columns() const { return smi() ? 5 : 3 + (n_clusters_ - 1); }

  int indicator_column(const TrialRow& row) const {
    return row.cluster_id >= 2 ? 3 + row.cluster_id - 2 : -1;
  }

  void accumulate(CrossProducts& cp, const TrialRow& row, double other, double y) const {
    Eigen::Vector3d dense(1.0, other, row.x);
    if (smi()) {
      Eigen::Matrix<double, 5, 1> full;
      full << dense, row.w, static_cast<double>(row.arm);
      cp.gram += full * full.transpose();
      cp.zty += full * y;
    } else {
      cp.gram.topLeftCorner<3, 3>() += dense * dense.transpose();
      cp.zty.head<3>() += dense * y;
      const int c = indicator_column(row);
      if (c >= 0) {
        cp.gram.col(c).head<3>() += dense;
        cp.gram.row(c).head<3>() += dense;
        cp.gram(c, c) += 1.0;
        cp.zty(c) += y;
      }
    }
    cp.yty += y * y;
    cp.n_obs += 1;
  }

  double predict(const Eigen::VectorXd& beta, const TrialRow& row, double other) const {
    double value = beta(0) + beta(1) * other + beta(2) * row.x;
    if (smi()) {
      value += beta(3) * row.w + beta(4) * row.arm;
    } else {
      const int c = indicator_column(row);
      if (c >= 0) value += beta(c);
    }
    return value;
  }

 private:
  FcsModelSpec::Variant variant_;
  int n_clusters_;
};

}  // namespace

BayesDraw bayes_norm_draw(const Eigen::MatrixXd& design, const Eigen::VectorXd& y_obs,
                          RngStream& stream) {
  if (design.rows() != y_obs.size())
    throw std::invalid_argument("design and response dimensions differ");
  CrossProducts cp(static_cast<int>(design.cols()));
  cp.gram = design.transpose() * design;
  cp.zty = design.transpose() * y_obs;
  cp.yty = y_obs.squaredNorm();
  cp.n_obs = static_cast<int>(design.rows());
  return bayes_draw_from_cross(cp, stream);
}

ImputedSet fcs_impute(const TrialDataset& data, const FcsModelSpec& spec, RngStream& stream) {
  if (spec.n_cycles < 5) throw std::invalid_argument("fcs requires n_cycles >= 5");
  if (spec.n_imputations < 1) throw std::invalid_argument("fcs requires M >= 1");

  const FcsDesign design(spec.variant, data.n_clusters);
  const int p = design.n_columns();
  const int n = static_cast<int>(data.rows.size());

  std::vector<int> observed[2], missing[2];
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < 2; ++l)
      (data.rows[i].observed(l) ? observed[l] : missing[l]).push_back(i);
  }

  for (int l = 0; l < 2; ++l) {
    if (missing[l].empty()) continue;
    if (static_cast<int>(observed[l].size()) < p + 2)
      throw std::runtime_error("too few observed rows");
    if (!design.smi()) {
      std::vector<bool> seen(data.n_clusters + 1, false);
      for (int i : observed[l]) seen[data.rows[i].cluster_id] = true;
      for (int j = 1; j <= data.n_clusters; ++j)
        if (!seen[j]) throw std::runtime_error("empty cluster under FMI");
    }
  }

  ImputedSet completed;
  completed.reserve(spec.n_imputations);

  for (int m = 0; m < spec.n_imputations; ++m) {
    TrialDataset work = data;
    // Fresh chain per imputation: initialise missing cells from the empirical
    // distribution of the observed values of the same outcome.
    for (int l = 0; l < 2; ++l) {
      for (int i : missing[l]) {
        const auto pick = static_cast<std::size_t>(stream.uniform() * observed[l].size());
        const int src = observed[l][std::min(pick, observed[l].size() - 1)];
        work.rows[i].set_y(l, work.rows[src].y(l));
      }
    }

    for (int cycle = 0; cycle < spec.n_cycles; ++cycle) {
      for (int l = 0; l < 2; ++l) {
        if (missing[l].empty()) continue;
        const int other = 1 - l;
        CrossProducts cp(p);
        for (int i : observed[l]) {
          const auto& row = work.rows[i];
          design.accumulate(cp, row, row.y(other), row.y(l));
        }
        const BayesDraw draw = bayes_draw_from_cross(cp, stream);
        for (int col : draw.dropped_columns)
          if (col == kOtherOutcomeColumn)
            throw std::runtime_error("singular imputation design");
        for (int i : missing[l]) {
          auto& row = work.rows[i];
          row.set_y(l, design.predict(draw.beta, row, row.y(other)) +
                           draw.sigma * stream.normal());
        }
      }
    }

    for (auto& row : work.rows) {
      row.r1 = true;
      row.r2 = true;
    }
    completed.push_back(std::move(work));
  }
  return completed;
}

}  // namespace crtmi
