#include "crtmi/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crtmi {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t scenario_index,
                     std::uint64_t replicate_index, std::string_view stage_tag) {
  std::uint64_t key = splitmix64(master_seed);
  key = splitmix64(key ^ scenario_index);
  key = splitmix64(key ^ replicate_index);
  key = splitmix64(key ^ fnv1a64(stage_tag));
  engine_.seed(key);
}

RngStream make_stream(std::uint64_t master_seed, std::uint64_t scenario_index,
                      std::uint64_t replicate_index, std::string_view stage_tag) {
  return RngStream(master_seed, scenario_index, replicate_index, stage_tag);
}

double RngStream::uniform() {
  // (k + 0.5) / 2^53 keeps draws strictly inside (0, 1).
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double draw_gamma(double shape, double scale, RngStream& stream) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("gamma requires positive shape and scale");
  if (shape < 1.0) {
    const double boost = std::pow(stream.uniform(), 1.0 / shape);
    return draw_gamma(shape + 1.0, scale, stream) * boost;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = stream.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = stream.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

double draw_chi_squared(double df, RngStream& stream) {
  if (!(df > 0.0)) throw std::invalid_argument("chi-squared requires df > 0");
  return draw_gamma(df / 2.0, 2.0, stream);
}

double draw_scaled_inv_chisq(double df, double scale, RngStream& stream) {
  if (!(df > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("scaled inverse chi-square requires positive df and scale");
  return df * scale / draw_chi_squared(df, stream);
}

Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                         RngStream& stream) {
  const auto p = mean.size();
  if (cov.rows() != p || cov.cols() != p)
    throw std::invalid_argument("invalid covariance: dimension mismatch");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("invalid covariance: not symmetric");

  Eigen::MatrixXd factor;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::VectorXd evals = es.eigenvalues();
    for (Eigen::Index i = 0; i < p; ++i) {
      if (evals(i) < -1e-10)
        throw std::invalid_argument("invalid covariance: negative eigenvalue");
      if (evals(i) < 0.0) evals(i) = 0.0;
    }
    factor = es.eigenvectors() * evals.cwiseSqrt().asDiagonal();
  }
  Eigen::VectorXd z(p);
  for (Eigen::Index i = 0; i < p; ++i) z(i) = stream.normal();
  return mean + factor * z;
}

Eigen::MatrixXd draw_inverse_wishart(double df, const Eigen::MatrixXd& scale,
                                     RngStream& stream) {
  const auto p = scale.rows();
  if (scale.cols() != p) throw std::invalid_argument("improper inverse-Wishart: scale not square");
  if (!(df > static_cast<double>(p) - 1.0))
    throw std::invalid_argument("improper inverse-Wishart: df <= p - 1");

  // Draw W ~ Wishart(df, scale^{-1}) by Bartlett decomposition; W^{-1} is the
  // inverse-Wishart(df, scale) draw.
  Eigen::LLT<Eigen::MatrixXd> scale_llt(scale);
  if (scale_llt.info() != Eigen::Success)
    throw std::invalid_argument("improper inverse-Wishart: scale not positive-definite");
  Eigen::MatrixXd scale_inv = scale_llt.solve(Eigen::MatrixXd::Identity(p, p));
  // Symmetrise before factoring; the solve can leave ~1e-16 asymmetry.
  scale_inv = 0.5 * (scale_inv + scale_inv.transpose());
  Eigen::LLT<Eigen::MatrixXd> inv_llt(scale_inv);
  Eigen::MatrixXd chol_inv = inv_llt.matrixL();

  Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    bartlett(i, i) = std::sqrt(draw_chi_squared(df - static_cast<double>(i), stream));
    for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = stream.normal();
  }
  const Eigen::MatrixXd lower = chol_inv * bartlett;
  const Eigen::MatrixXd wishart = lower * lower.transpose();
  Eigen::LLT<Eigen::MatrixXd> w_llt(wishart);
  Eigen::MatrixXd draw = w_llt.solve(Eigen::MatrixXd::Identity(p, p));
  return 0.5 * (draw + draw.transpose());
}

}  // namespace crtmi
