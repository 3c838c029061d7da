#ifndef CRTMI_IMPUTE_FCS_HPP
#define CRTMI_IMPUTE_FCS_HPP

#include <Eigen/Dense>
#include <vector>

#include "crtmi/rng.hpp"
#include "crtmi/trial.hpp"

namespace crtmi {

/// Chained-equations imputation with Bayesian normal regression draws.
/// SMI regresses each outcome on {other outcome, X, W, arm}; FMI replaces W
/// and arm with J-1 cluster indicators (which absorb both).
struct FcsModelSpec {
  enum class Variant { SMI, FMI };
  Variant variant = Variant::SMI;
  int n_cycles = 10;
  int n_imputations = 10;
};

/// Posterior draw for the normal linear model with the standard
/// noninformative prior: sigma*^2 = SSE/chi^2_{n-p}, beta* ~ N(beta_hat,
/// sigma*^2 (Z'Z)^{-1}). Exactly collinear trailing columns are dropped and
/// reported through dropped_columns with their beta* entries set to zero.
struct BayesDraw {
  Eigen::VectorXd beta;
  double sigma = 0.0;
  std::vector<int> dropped_columns;
};

BayesDraw bayes_norm_draw(const Eigen::MatrixXd& design, const Eigen::VectorXd& y_obs,
                          RngStream& stream);

ImputedSet fcs_impute(const TrialDataset& data, const FcsModelSpec& spec, RngStream& stream);

}  // namespace crtmi

#endif
