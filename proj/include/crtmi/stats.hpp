#ifndef CRTMI_STATS_HPP
#define CRTMI_STATS_HPP

#include <cmath>
#include <utility>
#include <vector>

namespace crtmi {

inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// 97.5% quantile of Student's t with (possibly fractional) df.
double t_quantile_975(double df);

/// Gauss-Hermite rule adapted to N(0,1) expectations:
/// E[f(Z)] ~= sum_i weights[i] * f(nodes[i]), weights summing to 1.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussHermiteRule gauss_hermite_normal(int n_nodes);

/// Mean and sample variance (divisor n-1) in one pass.
std::pair<double, double> mean_and_variance(const std::vector<double>& xs);

}  // namespace crtmi

#endif
