#ifndef CRTMI_IMPUTE_MMI_HPP
#define CRTMI_IMPUTE_MMI_HPP

#include <Eigen/Dense>
#include <vector>

#include "crtmi/rng.hpp"
#include "crtmi/trial.hpp"

namespace crtmi {

/// Inverse-Wishart hyperparameters for the two covariance matrices; fixed
/// effects carry a flat prior.
struct MmiPriors {
  double sigma_df = 2.0;
  Eigen::Matrix2d sigma_scale = Eigen::Matrix2d::Identity();
  double psi_df = 2.0;
  Eigen::Matrix2d psi_scale = Eigen::Matrix2d::Identity();
};

/// Draw the unobserved component of a bivariate normal given the other:
/// mean mu_a + cov_ab/cov_bb (y_b - mu_b), variance cov_aa - cov_ab^2/cov_bb,
/// where b = observed_index and a the other component.
double conditional_normal_impute(const Eigen::Vector2d& mu, const Eigen::Matrix2d& cov,
                                 int observed_index, double observed_value,
                                 RngStream& stream);

/// Gibbs sampler for the bivariate two-level normal imputation model
///   y_ij = Gamma' (1, arm, X, W) + b_j + e_ij,
/// b_j ~ N(0, Psi), e_ij ~ N(0, Sigma). One step cycles the missing-data
/// draw, b | rest, Gamma | rest, Sigma | rest and Psi | b.
class MmiSampler {
 public:
  MmiSampler(const TrialDataset& data, const MmiPriors& priors, RngStream& stream);

  void step();

  const Eigen::Matrix2d& sigma() const { return sigma_; }
  const Eigen::Matrix2d& psi() const { return psi_; }
  const Eigen::MatrixXd& gamma() const { return gamma_; }
  const Eigen::MatrixXd& random_effects() const { return b_; }

  void set_state(const Eigen::MatrixXd& gamma, const Eigen::Matrix2d& sigma,
                 const Eigen::Matrix2d& psi);

  /// Current completed dataset (observed cells untouched, all flags true).
  TrialDataset completed() const;

 private:
  void impute_missing();
  void draw_random_effects();
  void draw_fixed_effects();
  void draw_sigma();
  void draw_psi();
  Eigen::Matrix2d guarded_inverse_wishart(double df, const Eigen::Matrix2d& scale);

  const TrialDataset* data_;
  MmiPriors priors_;
  RngStream* stream_;
  int n_ = 0;
  int n_clusters_ = 0;
  Eigen::MatrixXd z_;            // n x 4 fixed-effect design
  Eigen::LLT<Eigen::Matrix4d> ztz_llt_;
  std::vector<int> cluster_of_;  // 0-based cluster per row
  std::vector<int> cluster_n_;
  Eigen::MatrixXd y_;            // n x 2 current completed outcomes
  Eigen::MatrixXd gamma_;        // 4 x 2
  Eigen::MatrixXd b_;            // J x 2
  Eigen::Matrix2d sigma_;
  Eigen::Matrix2d psi_;
  int consecutive_pd_failures_ = 0;
};

/// Multilevel multiple imputation: run the Gibbs sampler for burn_in steps,
/// emit the completed data, then emit again every `thin` steps until M
/// imputations are collected.
ImputedSet pan_gibbs_impute(const TrialDataset& data, const MmiPriors& priors, int n_imputations,
                            int burn_in, int thin, RngStream& stream);

}  // namespace crtmi

#endif
