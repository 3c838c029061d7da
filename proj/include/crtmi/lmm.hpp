#ifndef CRTMI_LMM_HPP
#define CRTMI_LMM_HPP

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "crtmi/trial.hpp"

namespace crtmi {

/// ML fit of the bivariate random-intercept model with treatment as the only
/// fixed effect:
///   Y_l = beta_l0 + beta_l * arm + u_lj + e_lij,
/// (u_1j, u_2j) ~ N(0, Psi), (e_1ij, e_2ij) ~ N(0, Sigma).
struct FitResult {
  std::array<double, 2> beta_hat{0.0, 0.0};    // treatment effects
  std::array<double, 2> intercepts{0.0, 0.0};  // control-arm means
  Eigen::Matrix2d beta_cov = Eigen::Matrix2d::Zero();
  // sigma1, sigma2, rho, tau1, tau2, phi
  std::array<double, 6> varcomp{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  double loglik = 0.0;
  bool converged = false;
  int n_iter = 0;
};

struct FitOptions {
  int max_iter = 500;
  double tol = 1e-8;
  /// Maximise the restricted likelihood instead of the full likelihood.
  bool reml = false;
};

/// Variance components on the unconstrained (log-Cholesky) scale:
/// theta = (log L11, L21, log L22) for Sigma then the same for Psi.
using VarParams = Eigen::Matrix<double, 6, 1>;

struct VarComp {
  Eigen::Matrix2d sigma;
  Eigen::Matrix2d psi;
};

VarComp varcomp_from_unconstrained(const VarParams& theta);
VarParams unconstrained_from_varcomp(const Eigen::Matrix2d& sigma,
                                     const Eigen::Matrix2d& psi);

/// Per-cluster sufficient statistics of a completed dataset.
struct ClusterStat {
  int n = 0;
  int arm = 0;
  Eigen::Vector2d ybar = Eigen::Vector2d::Zero();
  Eigen::Matrix2d dev_cross = Eigen::Matrix2d::Zero();  // sum of (y - ybar)(y - ybar)^T
};

std::vector<ClusterStat> cluster_stats(const TrialDataset& data);

/// Exact marginal log-likelihood with per-cluster covariance
/// V_j = I ⊗ Sigma + J ⊗ Psi, evaluated in O(n_j) per cluster via the
/// two-eigenvalue structure of the all-ones matrix. beta is ordered
/// (beta_10, beta_1, beta_20, beta_2). Returns -infinity outside the
/// positive-definite region.
double marginal_loglik(const VarParams& theta, const Eigen::Vector4d& beta,
                       const TrialDataset& data);

FitResult fit_bivariate_lmm(const TrialDataset& data, const FitOptions& options = {});

/// Complete-case reduction: keep rows with both outcomes observed, drop
/// clusters left empty (count reported through dropped_clusters).
TrialDataset cca_prepare(const TrialDataset& data, int* dropped_clusters = nullptr);

}  // namespace crtmi

#endif
