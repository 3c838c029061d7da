#include "crtmi/stats.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <stdexcept>

namespace crtmi {

double t_quantile_975(double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t quantile requires df > 0");
  // Beyond ~1e7 df the t quantile is the normal quantile to double precision.
  if (df > 1e7) df = 1e7;
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, 0.975);
}

GaussHermiteRule gauss_hermite_normal(int n_nodes) {
  if (n_nodes < 1) throw std::invalid_argument("quadrature needs >= 1 node");
  // Golub-Welsch on the Hermite Jacobi matrix (weight exp(-x^2)),
  // then rescale nodes by sqrt(2) and normalise weights so they sum to 1.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  for (int i = 1; i < n_nodes; ++i) {
    const double b = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermiteRule rule;
  rule.nodes.resize(n_nodes);
  rule.weights.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    rule.nodes[i] = es.eigenvalues()(i) * std::sqrt(2.0);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;  // mu0 = sqrt(pi) cancels after normalisation
  }
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

std::pair<double, double> mean_and_variance(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / (n - 1.0)};
}

}  // namespace crtmi
