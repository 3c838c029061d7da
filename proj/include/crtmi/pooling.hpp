#ifndef CRTMI_POOLING_HPP
#define CRTMI_POOLING_HPP

#include <limits>
#include <utility>
#include <vector>

namespace crtmi {

struct PooledEstimate {
  double q_bar = 0.0;     // pooled point estimate
  double within = 0.0;    // W: mean within-imputation variance
  double between = 0.0;   // B: between-imputation variance (divisor M-1)
  double total = 0.0;     // T = W + (1 + 1/M) B
  double df = 0.0;        // Rubin degrees of freedom
  std::pair<double, double> ci{0.0, 0.0};  // 95% interval
  int n_imputations = 0;
};

/// Rubin's rules for a scalar estimand. df = (M-1)(1 + W/((1+1/M)B))^2,
/// capped at 1e7 when B = 0. A finite complete_data_df applies the
/// Barnard-Rubin small-sample adjustment instead:
/// df = 1 / (1/df_rubin + 1/df_obs) with
/// df_obs = (1 - gamma) nu (nu+1)/(nu+3), gamma = (1+1/M)B/T.
PooledEstimate rubin_pool(const std::vector<double>& estimates,
                          const std::vector<double>& variances,
                          double complete_data_df = std::numeric_limits<double>::infinity());

}  // namespace crtmi

#endif
