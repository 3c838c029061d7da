#include "crtmi/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

namespace crtmi {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Floor of 1e-10 on the variances via the diagonal of the log-Cholesky factor.
constexpr double kLogDiagMin = -11.512925464970229;  // log(1e-5)
constexpr double kLogDiagMax = 20.0;

double clamp_diag(double t) { return std::clamp(t, kLogDiagMin, kLogDiagMax); }

Eigen::Matrix2d chol_from_params(double log_l11, double l21, double log_l22) {
  Eigen::Matrix2d l;
  l << std::exp(clamp_diag(log_l11)), 0.0, l21, std::exp(clamp_diag(log_l22));
  return l;
}

}  // namespace

VarComp varcomp_from_unconstrained(const VarParams& theta) {
  const Eigen::Matrix2d ls = chol_from_params(theta(0), theta(1), theta(2));
  const Eigen::Matrix2d lp = chol_from_params(theta(3), theta(4), theta(5));
  return {ls * ls.transpose(), lp * lp.transpose()};
}

VarParams unconstrained_from_varcomp(const Eigen::Matrix2d& sigma,
                                     const Eigen::Matrix2d& psi) {
  const auto pack = [](const Eigen::Matrix2d& m, double* out) {
    const double l11 = std::sqrt(std::max(m(0, 0), 1e-10));
    const double l21 = m(1, 0) / l11;
    const double l22 = std::sqrt(std::max(m(1, 1) - l21 * l21, 1e-10));
    out[0] = clamp_diag(std::log(l11));
    out[1] = l21;
    out[2] = clamp_diag(std::log(l22));
  };
  VarParams theta;
  pack(sigma, theta.data());
  pack(psi, theta.data() + 3);
  return theta;
}

std::vector<ClusterStat> cluster_stats(const TrialDataset& data) {
  std::map<int, ClusterStat> by_cluster;
  for (const auto& row : data.rows) {
    if (!row.r1 || !row.r2 || std::isnan(row.y1) || std::isnan(row.y2))
      throw std::invalid_argument("cluster_stats requires completed data");
    auto& stat = by_cluster[row.cluster_id];
    stat.n += 1;
    stat.arm = row.arm;
    stat.ybar += Eigen::Vector2d(row.y1, row.y2);
  }
  for (auto& [id, stat] : by_cluster) stat.ybar /= stat.n;
  for (const auto& row : data.rows) {
    auto& stat = by_cluster[row.cluster_id];
    const Eigen::Vector2d d = Eigen::Vector2d(row.y1, row.y2) - stat.ybar;
    stat.dev_cross += d * d.transpose();
  }
  std::vector<ClusterStat> stats;
  stats.reserve(by_cluster.size());
  for (auto& [id, stat] : by_cluster) stats.push_back(stat);
  return stats;
}

namespace {

struct Inverse2 {
  Eigen::Matrix2d inv;
  double logdet;
  bool pd;
};

Inverse2 invert_2x2(const Eigen::Matrix2d& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (!(m(0, 0) > 0.0) || !(det > 0.0)) return {Eigen::Matrix2d::Zero(), 0.0, false};
  Inverse2 r;
  r.inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  r.inv /= det;
  r.logdet = std::log(det);
  r.pd = true;
  return r;
}

/// Marginal log-likelihood evaluator over precomputed cluster statistics.
/// Optionally profiles the saturated arm-means out by GLS.
class Evaluator {
 public:
  explicit Evaluator(std::vector<ClusterStat> stats) : stats_(std::move(stats)) {
    for (const auto& s : stats_) total_n_ += s.n;
    arm_inv_.resize(stats_.size());
    arm_logdet_.resize(stats_.size());
  }

  const std::vector<ClusterStat>& stats() const { return stats_; }
  int total_n() const { return total_n_; }

  int clusters_in_arm(int arm) const {
    int count = 0;
    for (const auto& s : stats_) count += s.arm == arm ? 1 : 0;
    return count;
  }

  /// Log-likelihood at fixed beta (beta_10, beta_1, beta_20, beta_2).
  double loglik(const VarComp& vc, const Eigen::Vector4d& beta) {
    if (!prepare(vc)) return kNegInf;
    const Eigen::Vector2d mu0(beta(0), beta(2));
    const Eigen::Vector2d mu1(beta(0) + beta(1), beta(2) + beta(3));
    return finish(mu0, mu1);
  }

  /// Profile log-likelihood: beta replaced by its GLS value at (Sigma, Psi).
  double profile_loglik(const VarComp& vc) {
    Eigen::Vector2d mu0, mu1;
    Eigen::Matrix2d cov0, cov1;
    return profile_loglik(vc, mu0, mu1, cov0, cov1);
  }

  double profile_loglik(const VarComp& vc, Eigen::Vector2d& mu0, Eigen::Vector2d& mu1,
                        Eigen::Matrix2d& cov0, Eigen::Matrix2d& cov1) {
    if (!prepare(vc)) return kNegInf;
    Eigen::Matrix2d info[2] = {Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()};
    Eigen::Vector2d rhs[2] = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
    for (std::size_t j = 0; j < stats_.size(); ++j) {
      const auto& s = stats_[j];
      const Eigen::Matrix2d w = s.n * arm_inv_[j];
      info[s.arm] += w;
      rhs[s.arm] += w * s.ybar;
    }
    const auto inv0 = invert_2x2(info[0]);
    const auto inv1 = invert_2x2(info[1]);
    if (!inv0.pd || !inv1.pd) return kNegInf;
    mu0 = inv0.inv * rhs[0];
    mu1 = inv1.inv * rhs[1];
    cov0 = inv0.inv;
    cov1 = inv1.inv;
    return finish(mu0, mu1);
  }

 private:
  bool prepare(const VarComp& vc) {
    const auto sigma_inv = invert_2x2(vc.sigma);
    if (!sigma_inv.pd) return false;
    sigma_inv_ = sigma_inv.inv;
    sigma_logdet_ = sigma_inv.logdet;
    for (std::size_t j = 0; j < stats_.size(); ++j) {
      const Eigen::Matrix2d a = vc.sigma + stats_[j].n * vc.psi;
      const auto a_inv = invert_2x2(a);
      if (!a_inv.pd) return false;
      arm_inv_[j] = a_inv.inv;
      arm_logdet_[j] = a_inv.logdet;
    }
    return true;
  }

  double finish(const Eigen::Vector2d& mu0, const Eigen::Vector2d& mu1) const {
    double ll = 0.0;
    for (std::size_t j = 0; j < stats_.size(); ++j) {
      const auto& s = stats_[j];
      const Eigen::Vector2d m = s.ybar - (s.arm == 0 ? mu0 : mu1);
      double term = 2.0 * s.n * std::log(2.0 * std::numbers::pi);
      term += (s.n - 1) * sigma_logdet_ + arm_logdet_[j];
      term += (sigma_inv_.cwiseProduct(s.dev_cross)).sum();
      term += s.n * m.dot(arm_inv_[j] * m);
      ll -= 0.5 * term;
    }
    return ll;
  }

  std::vector<ClusterStat> stats_;
  int total_n_ = 0;
  Eigen::Matrix2d sigma_inv_ = Eigen::Matrix2d::Zero();
  double sigma_logdet_ = 0.0;
  std::vector<Eigen::Matrix2d> arm_inv_;
  std::vector<double> arm_logdet_;
};

/// Method-of-moments starting values from one-way decompositions of the
/// per-arm residuals.
VarParams moments_init(const std::vector<ClusterStat>& stats, int total_n) {
  Eigen::Vector2d arm_mean[2] = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  double arm_n[2] = {0.0, 0.0};
  for (const auto& s : stats) {
    arm_mean[s.arm] += s.n * s.ybar;
    arm_n[s.arm] += s.n;
  }
  for (int a = 0; a < 2; ++a)
    if (arm_n[a] > 0) arm_mean[a] /= arm_n[a];

  Eigen::Matrix2d within = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d between_raw = Eigen::Matrix2d::Zero();
  double inv_n_sum = 0.0;
  for (const auto& s : stats) {
    within += s.dev_cross;
    const Eigen::Vector2d r = s.ybar - arm_mean[s.arm];
    between_raw += r * r.transpose();
    inv_n_sum += 1.0 / s.n;
  }
  const double within_df = std::max(1.0, static_cast<double>(total_n - stats.size()));
  Eigen::Matrix2d sigma = within / within_df;
  const double j_eff = std::max(1.0, static_cast<double>(stats.size()) - 2.0);
  // E[ybar_j ybar_j^T] = Psi + Sigma / n_j for centred cluster means.
  Eigen::Matrix2d psi = between_raw / j_eff - sigma * (inv_n_sum / stats.size());

  const auto floor_pd = [](Eigen::Matrix2d m) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (m + m.transpose()));
    Eigen::Vector2d ev = es.eigenvalues().cwiseMax(1e-8);
    return Eigen::Matrix2d(es.eigenvectors() * ev.asDiagonal() *
                           es.eigenvectors().transpose());
  };
  return unconstrained_from_varcomp(floor_pd(sigma), floor_pd(psi));
}

struct BfgsResult {
  VarParams theta;
  double value = kNegInf;
  bool converged = false;
  int n_iter = 0;
};

void clamp_theta(VarParams& theta) {
  for (int i : {0, 2, 3, 5}) theta(i) = clamp_diag(theta(i));
  for (int i : {1, 4}) theta(i) = std::clamp(theta(i), -1e6, 1e6);
}

/// Maximises f by BFGS with central-difference gradients.
template <typename F>
BfgsResult bfgs_maximise(const F& f, VarParams theta0, int max_iter, double tol) {
  clamp_theta(theta0);
  const auto gradient = [&](const VarParams& theta, double& fx) {
    VarParams g;
    for (int i = 0; i < 6; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta(i)));
      VarParams up = theta, dn = theta;
      up(i) += h;
      dn(i) -= h;
      const double fu = f(up);
      const double fd = f(dn);
      g(i) = (std::isfinite(fu) && std::isfinite(fd)) ? (fu - fd) / (2.0 * h) : 0.0;
    }
    fx = f(theta);
    return g;
  };

  BfgsResult result;
  result.theta = theta0;
  double fx;
  VarParams grad = gradient(theta0, fx);
  result.value = fx;
  if (!std::isfinite(fx)) return result;

  Eigen::Matrix<double, 6, 6> hinv = Eigen::Matrix<double, 6, 6>::Identity();
  VarParams theta = theta0;
  for (int iter = 0; iter < max_iter; ++iter) {
    result.n_iter = iter + 1;
    if (grad.cwiseAbs().maxCoeff() < 1e-7 * std::max(1.0, std::abs(fx))) {
      result.converged = true;
      break;
    }
    VarParams direction = hinv * grad;  // ascent
    if (direction.dot(grad) <= 0.0) {
      hinv.setIdentity();
      direction = grad;
    }
    double step = 1.0;
    double f_new = kNegInf;
    VarParams theta_new;
    const double slope = direction.dot(grad);
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      theta_new = theta + step * direction;
      clamp_theta(theta_new);
      f_new = f(theta_new);
      if (std::isfinite(f_new) && f_new >= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No ascent along this direction; treat as stationary.
      result.converged = grad.cwiseAbs().maxCoeff() < 1e-3 * std::max(1.0, std::abs(fx));
      break;
    }
    double f_at_new;
    const VarParams grad_new = gradient(theta_new, f_at_new);
    const VarParams s = theta_new - theta;
    const VarParams y = grad - grad_new;  // gradient change of -f
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const Eigen::Matrix<double, 6, 6> eye = Eigen::Matrix<double, 6, 6>::Identity();
      const Eigen::Matrix<double, 6, 6> v = eye - (s * y.transpose()) / sy;
      hinv = v * hinv * v.transpose() + (s * s.transpose()) / sy;
    }
    const double improvement = f_new - fx;
    theta = theta_new;
    fx = f_new;
    grad = grad_new;
    result.theta = theta;
    result.value = fx;
    if (improvement < tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

double marginal_loglik(const VarParams& theta, const Eigen::Vector4d& beta,
                       const TrialDataset& data) {
  Evaluator eval(cluster_stats(data));
  return eval.loglik(varcomp_from_unconstrained(theta), beta);
}

FitResult fit_bivariate_lmm(const TrialDataset& data, const FitOptions& options) {
  Evaluator eval(cluster_stats(data));
  if (eval.clusters_in_arm(0) < 2 || eval.clusters_in_arm(1) < 2)
    throw std::invalid_argument("arm has too few clusters");

  const auto objective = [&eval](const VarParams& theta) {
    return eval.profile_loglik(varcomp_from_unconstrained(theta));
  };

  const VarParams init = moments_init(eval.stats(), eval.total_n());
  BfgsResult best = bfgs_maximise(objective, init, options.max_iter, options.tol);
  if (!best.converged) {
    // One restart from a flat decomposition of the pooled covariance.
    VarComp vc = varcomp_from_unconstrained(init);
    const Eigen::Matrix2d total = vc.sigma + vc.psi;
    const VarParams alt = unconstrained_from_varcomp(0.8 * total, 0.2 * total);
    BfgsResult retry = bfgs_maximise(objective, alt, options.max_iter, options.tol);
    if (retry.converged || retry.value > best.value) {
      retry.n_iter += best.n_iter;
      best = retry;
    }
  }

  const VarComp vc = varcomp_from_unconstrained(best.theta);
  Eigen::Vector2d mu0, mu1;
  Eigen::Matrix2d cov0, cov1;
  const double ll = eval.profile_loglik(vc, mu0, mu1, cov0, cov1);

  FitResult fit;
  fit.intercepts = {mu0(0), mu0(1)};
  fit.beta_hat = {mu1(0) - mu0(0), mu1(1) - mu0(1)};
  fit.beta_cov = cov0 + cov1;
  const double sigma1 = std::sqrt(vc.sigma(0, 0));
  const double sigma2 = std::sqrt(vc.sigma(1, 1));
  const double tau1 = std::sqrt(vc.psi(0, 0));
  const double tau2 = std::sqrt(vc.psi(1, 1));
  fit.varcomp = {sigma1,
                 sigma2,
                 vc.sigma(0, 1) / std::max(sigma1 * sigma2, 1e-300),
                 tau1,
                 tau2,
                 vc.psi(0, 1) / std::max(tau1 * tau2, 1e-300)};
  fit.loglik = ll;
  fit.converged = best.converged && std::isfinite(ll);
  fit.n_iter = best.n_iter;
  return fit;
}

TrialDataset cca_prepare(const TrialDataset& data, int* dropped_clusters) {
  TrialDataset kept;
  std::map<int, std::pair<int, int>> retained;  // cluster id -> (rows kept, arm)
  for (const auto& row : data.rows) {
    auto& entry = retained.emplace(row.cluster_id, std::make_pair(0, row.arm)).first->second;
    if (row.r1 && row.r2) {
      kept.rows.push_back(row);
      ++entry.first;
    }
  }
  int dropped = 0;
  int arm_clusters[2] = {0, 0};
  for (const auto& [id, entry] : retained) {
    if (entry.first == 0) {
      ++dropped;
    } else {
      ++kept.n_clusters;
      ++arm_clusters[entry.second];
    }
  }
  if (dropped_clusters) *dropped_clusters = dropped;
  if (arm_clusters[0] < 2 || arm_clusters[1] < 2)
    throw std::runtime_error("CCA infeasible");
  return kept;
}

}  // namespace crtmi
