#include "crtmi/impute_mmi.hpp"

#include <cmath>
#include <stdexcept>

namespace crtmi {

double conditional_normal_impute(const Eigen::Vector2d& mu, const Eigen::Matrix2d& cov,
                                 int observed_index, double observed_value,
                                 RngStream& stream) {
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  if (!(cov(0, 0) > 0.0) || !(det >= 0.0))
    throw std::invalid_argument("conditional impute requires positive-definite covariance");
  const int b = observed_index;
  const int a = 1 - b;
  const double cond_mean = mu(a) + cov(a, b) / cov(b, b) * (observed_value - mu(b));
  const double cond_var = std::max(0.0, cov(a, a) - cov(a, b) * cov(a, b) / cov(b, b));
  return cond_mean + std::sqrt(cond_var) * stream.normal();
}

namespace {

Eigen::Matrix2d floor_pd(const Eigen::Matrix2d& m, double min_eigenvalue) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (m + m.transpose()));
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(min_eigenvalue);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::Matrix2d chol2(const Eigen::Matrix2d& m) {
  Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
  l(0, 0) = std::sqrt(m(0, 0));
  l(1, 0) = m(1, 0) / l(0, 0);
  l(1, 1) = std::sqrt(std::max(0.0, m(1, 1) - l(1, 0) * l(1, 0)));
  return l;
}

Eigen::Matrix2d inverse2(const Eigen::Matrix2d& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Eigen::Matrix2d inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

}  // namespace

MmiSampler::MmiSampler(const TrialDataset& data, const MmiPriors& priors, RngStream& stream)
    : data_(&data), priors_(priors), stream_(&stream) {
  n_ = static_cast<int>(data.rows.size());
  n_clusters_ = data.n_clusters;
  if (n_ == 0) throw std::invalid_argument("empty dataset");

  cluster_n_.assign(n_clusters_, 0);
  cluster_of_.resize(n_);
  z_.resize(n_, 4);
  y_.resize(n_, 2);
  for (int i = 0; i < n_; ++i) {
    const auto& row = data.rows[i];
    if (row.cluster_id < 1 || row.cluster_id > n_clusters_)
      throw std::invalid_argument("cluster id out of range");
    cluster_of_[i] = row.cluster_id - 1;
    cluster_n_[cluster_of_[i]] += 1;
    z_.row(i) << 1.0, static_cast<double>(row.arm), row.x, row.w;
  }
  for (int j = 0; j < n_clusters_; ++j)
    if (cluster_n_[j] == 0) throw std::invalid_argument("cluster with no rows");

  const Eigen::Matrix4d ztz = z_.transpose() * z_;
  ztz_llt_.compute(ztz);
  if (ztz_llt_.info() != Eigen::Success)
    throw std::invalid_argument("fixed-effect design rank-deficient");

  // Initial fill from the observed marginals, then moment-based initial
  // parameter values; the burn-in washes the initialisation out.
  std::vector<double> obs_values[2];
  for (const auto& row : data.rows)
    for (int l = 0; l < 2; ++l)
      if (row.observed(l)) obs_values[l].push_back(row.y(l));
  for (int l = 0; l < 2; ++l)
    if (obs_values[l].empty()) throw std::invalid_argument("outcome entirely missing");

  for (int i = 0; i < n_; ++i) {
    const auto& row = data.rows[i];
    for (int l = 0; l < 2; ++l) {
      if (row.observed(l)) {
        y_(i, l) = row.y(l);
      } else {
        const auto pick = static_cast<std::size_t>(stream.uniform() * obs_values[l].size());
        y_(i, l) = obs_values[l][std::min(pick, obs_values[l].size() - 1)];
      }
    }
  }

  gamma_ = ztz_llt_.solve(z_.transpose() * y_);
  const Eigen::MatrixXd resid = y_ - z_ * gamma_;
  sigma_ = floor_pd((resid.transpose() * resid) / std::max(1, n_ - 4), 1e-6);
  Eigen::MatrixXd cluster_means = Eigen::MatrixXd::Zero(n_clusters_, 2);
  for (int i = 0; i < n_; ++i) cluster_means.row(cluster_of_[i]) += resid.row(i);
  for (int j = 0; j < n_clusters_; ++j) cluster_means.row(j) /= cluster_n_[j];
  psi_ = floor_pd((cluster_means.transpose() * cluster_means) / std::max(1, n_clusters_ - 1),
                  1e-4);
  b_ = Eigen::MatrixXd::Zero(n_clusters_, 2);
}

void MmiSampler::set_state(const Eigen::MatrixXd& gamma, const Eigen::Matrix2d& sigma,
                           const Eigen::Matrix2d& psi) {
  gamma_ = gamma;
  sigma_ = sigma;
  psi_ = psi;
}

void MmiSampler::impute_missing() {
  const Eigen::Matrix2d chol_sigma = chol2(sigma_);
  for (int i = 0; i < n_; ++i) {
    const auto& row = data_->rows[i];
    if (row.r1 && row.r2) continue;
    const Eigen::Vector2d mu =
        gamma_.transpose() * z_.row(i).transpose() + b_.row(cluster_of_[i]).transpose();
    if (!row.r1 && !row.r2) {
      const Eigen::Vector2d noise(stream_->normal(), stream_->normal());
      y_.row(i) = (mu + chol_sigma * noise).transpose();
    } else {
      const int obs = row.r1 ? 0 : 1;
      y_(i, 1 - obs) = conditional_normal_impute(mu, sigma_, obs, y_(i, obs), *stream_);
    }
  }
}

void MmiSampler::draw_random_effects() {
  const Eigen::Matrix2d sigma_inv = inverse2(sigma_);
  const Eigen::Matrix2d psi_inv = inverse2(psi_);
  Eigen::MatrixXd resid_sum = Eigen::MatrixXd::Zero(n_clusters_, 2);
  const Eigen::MatrixXd resid = y_ - z_ * gamma_;
  for (int i = 0; i < n_; ++i) resid_sum.row(cluster_of_[i]) += resid.row(i);
  for (int j = 0; j < n_clusters_; ++j) {
    const Eigen::Matrix2d precision = cluster_n_[j] * sigma_inv + psi_inv;
    const Eigen::Matrix2d cov = inverse2(precision);
    const Eigen::Vector2d mean = cov * (sigma_inv * resid_sum.row(j).transpose());
    const Eigen::Matrix2d l = chol2(floor_pd(cov, 0.0));
    const Eigen::Vector2d noise(stream_->normal(), stream_->normal());
    b_.row(j) = (mean + l * noise).transpose();
  }
}

void MmiSampler::draw_fixed_effects() {
  Eigen::MatrixXd y_centered = y_;
  for (int i = 0; i < n_; ++i) y_centered.row(i) -= b_.row(cluster_of_[i]);
  const Eigen::MatrixXd gamma_hat = ztz_llt_.solve(z_.transpose() * y_centered);
  // Matrix-normal draw with row covariance (Z'Z)^{-1} and column covariance
  // Sigma: Gamma = Gamma_hat + L^{-T} E chol(Sigma)^T.
  Eigen::MatrixXd noise(4, 2);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 2; ++c) noise(r, c) = stream_->normal();
  const Eigen::MatrixXd row_factor = ztz_llt_.matrixU().solve(noise);
  gamma_ = gamma_hat + row_factor * chol2(sigma_).transpose();
}

Eigen::Matrix2d MmiSampler::guarded_inverse_wishart(double df, const Eigen::Matrix2d& scale) {
  for (;;) {
    const Eigen::Matrix2d draw = draw_inverse_wishart(df, scale, *stream_);
    const double det = draw(0, 0) * draw(1, 1) - draw(0, 1) * draw(1, 0);
    if (draw(0, 0) > 0.0 && det > 0.0 && std::isfinite(det)) {
      consecutive_pd_failures_ = 0;
      return draw;
    }
    if (++consecutive_pd_failures_ >= 50) throw std::runtime_error("sampler degenerate");
  }
}

void MmiSampler::draw_sigma() {
  Eigen::MatrixXd resid = y_ - z_ * gamma_;
  for (int i = 0; i < n_; ++i) resid.row(i) -= b_.row(cluster_of_[i]);
  const Eigen::Matrix2d scale = priors_.sigma_scale + resid.transpose() * resid;
  sigma_ = guarded_inverse_wishart(priors_.sigma_df + n_, scale);
}

void MmiSampler::draw_psi() {
  const Eigen::Matrix2d scale = priors_.psi_scale + b_.transpose() * b_;
  psi_ = guarded_inverse_wishart(priors_.psi_df + n_clusters_, scale);
}

void MmiSampler::step() {
  impute_missing();
  draw_random_effects();
  draw_fixed_effects();
  draw_sigma();
  draw_psi();
}

TrialDataset MmiSampler::completed() const {
  TrialDataset out = *data_;
  for (int i = 0; i < n_; ++i) {
    out.rows[i].y1 = y_(i, 0);
    out.rows[i].y2 = y_(i, 1);
    out.rows[i].r1 = true;
    out.rows[i].r2 = true;
  }
  return out;
}

ImputedSet pan_gibbs_impute(const TrialDataset& data, const MmiPriors& priors, int n_imputations,
                            int burn_in, int thin, RngStream& stream) {
  if (n_imputations < 1) throw std::invalid_argument("M must be >= 1");
  if (burn_in < 1 || thin < 1) throw std::invalid_argument("burn_in and thin must be >= 1");

  MmiSampler sampler(data, priors, stream);
  ImputedSet completed;
  completed.reserve(n_imputations);
  const int total = burn_in + (n_imputations - 1) * thin;
  for (int iter = 1; iter <= total; ++iter) {
    sampler.step();
    if (iter >= burn_in && (iter - burn_in) % thin == 0)
      completed.push_back(sampler.completed());
  }
  return completed;
}

}  // namespace crtmi
