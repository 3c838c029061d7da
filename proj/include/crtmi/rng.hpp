#ifndef CRTMI_RNG_HPP
#define CRTMI_RNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string_view>

namespace crtmi {

/// Deterministic random stream keyed by (master_seed, scenario, replicate,
/// stage). Streams with equal keys replay the same draw sequence; streams
/// differing in any key component are independent for practical purposes.
/// Keyed construction (rather than sequential splitting) keeps results
/// identical under any parallel schedule.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t scenario_index,
            std::uint64_t replicate_index, std::string_view stage_tag);

  /// Uniform draw in the open interval (0, 1).
  double uniform();

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

RngStream make_stream(std::uint64_t master_seed, std::uint64_t scenario_index,
                      std::uint64_t replicate_index, std::string_view stage_tag);

/// Gamma(shape, scale) with mean shape*scale (Marsaglia-Tsang).
double draw_gamma(double shape, double scale, RngStream& stream);

double draw_chi_squared(double df, RngStream& stream);

/// Scaled inverse chi-square: returns df*scale/X with X ~ chi^2_df,
/// so the mean is df*scale/(df-2) for df > 2.
double draw_scaled_inv_chisq(double df, double scale, RngStream& stream);

/// Multivariate normal draw. cov must be symmetric with eigenvalues
/// >= -1e-10; tiny negative eigenvalues are clipped to zero.
Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                         RngStream& stream);

/// Inverse-Wishart draw with E[X] = scale/(df - p - 1); requires df > p - 1.
Eigen::MatrixXd draw_inverse_wishart(double df, const Eigen::MatrixXd& scale,
                                     RngStream& stream);

}  // namespace crtmi

#endif
