#include "crtmi/pooling.hpp"

#include <cmath>
#include <stdexcept>

#include "crtmi/stats.hpp"

namespace crtmi {

PooledEstimate rubin_pool(const std::vector<double>& estimates,
                          const std::vector<double>& variances,
                          double complete_data_df) {
  const std::size_t m = estimates.size();
  if (m < 2 || variances.size() != m)
    throw std::invalid_argument("pooling requires M >= 2");
  for (double v : variances)
    if (!(v >= 0.0)) throw std::invalid_argument("pooling requires nonnegative variances");

  PooledEstimate pooled;
  pooled.n_imputations = static_cast<int>(m);
  const auto [q_bar, between] = mean_and_variance(estimates);
  pooled.q_bar = q_bar;
  pooled.between = between;
  double within = 0.0;
  for (double v : variances) within += v;
  pooled.within = within / static_cast<double>(m);
  const double inflation = 1.0 + 1.0 / static_cast<double>(m);
  pooled.total = pooled.within + inflation * pooled.between;

  if (pooled.between <= 0.0) {
    pooled.df = 1e7;
  } else {
    const double ratio = 1.0 + pooled.within / (inflation * pooled.between);
    pooled.df = std::min(1e7, (static_cast<double>(m) - 1.0) * ratio * ratio);
  }
  if (std::isfinite(complete_data_df)) {
    if (!(complete_data_df > 0.0))
      throw std::invalid_argument("complete-data df must be positive");
    const double gamma = pooled.total > 0.0 ? inflation * pooled.between / pooled.total : 0.0;
    const double nu = complete_data_df;
    const double df_obs = (1.0 - gamma) * nu * (nu + 1.0) / (nu + 3.0);
    pooled.df = 1.0 / (1.0 / pooled.df + 1.0 / df_obs);
  }
  const double half_width = t_quantile_975(pooled.df) * std::sqrt(pooled.total);
  pooled.ci = {pooled.q_bar - half_width, pooled.q_bar + half_width};
  return pooled;
}

}  // namespace crtmi
