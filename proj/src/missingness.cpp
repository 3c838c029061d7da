#include "crtmi/missingness.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "crtmi/stats.hpp"

namespace crtmi {

std::array<double, 2> eta_values(Mechanism mechanism, EtaLevel level) {
  if (mechanism == Mechanism::treatment)
    return level == EtaLevel::low ? std::array<double, 2>{1.0, 2.0}
                                  : std::array<double, 2>{1.5, 3.0};
  const double eta = level == EtaLevel::low ? 1.0 : 2.0;
  return {eta, eta};
}

std::array<std::array<double, 2>, 2> target_rates(Mechanism mechanism, EtaLevel eta,
                                                  NonresponseLevel nonresponse) {
  std::array<std::array<double, 2>, 2> rates{};  // [arm][outcome]
  if (mechanism != Mechanism::treatment) {
    const std::array<double, 2> per_outcome =
        nonresponse == NonresponseLevel::equal ? std::array<double, 2>{0.20, 0.20}
                                               : std::array<double, 2>{0.30, 0.10};
    rates[0] = per_outcome;
    rates[1] = per_outcome;
    return rates;
  }
  // Treatment-differential settings: control targets are design values and the
  // intervention rates are the tabulated empirical rates, both pinned here.
  if (eta == EtaLevel::low) {
    if (nonresponse == NonresponseLevel::equal) {
      rates[0] = {0.20, 0.20};
      rates[1] = {0.35, 0.35};
    } else {
      rates[0] = {0.30, 0.10};
      rates[1] = {0.45, 0.20};
    }
  } else {
    if (nonresponse == NonresponseLevel::equal) {
      rates[0] = {0.10, 0.10};
      rates[1] = {0.30, 0.30};
    } else {
      rates[0] = {0.15, 0.10};
      rates[1] = {0.35, 0.30};
    }
  }
  return rates;
}

namespace {

double predictor_variance(Mechanism mechanism) {
  return (mechanism == Mechanism::both || mechanism == Mechanism::treatment) ? 2.0 : 1.0;
}

}  // namespace

double calibrate_alpha0(Mechanism mechanism, double eta, double target_pi) {
  if (!(target_pi > 0.0) || !(target_pi < 1.0))
    throw std::invalid_argument("calibration failed: target must lie in (0, 1)");
  const double sd = std::abs(eta) * std::sqrt(predictor_variance(mechanism));
  if (sd == 0.0) return logit(target_pi);

  static const GaussHermiteRule rule = gauss_hermite_normal(64);
  const auto mean_rate = [&](double alpha0) {
    double rate = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      rate += rule.weights[i] * logistic(alpha0 + sd * rule.nodes[i]);
    return rate;
  };

  double lo = -20.0, hi = 20.0;
  if (mean_rate(lo) > target_pi || mean_rate(hi) < target_pi)
    throw std::runtime_error("calibration failed: no root in [-20, 20]");
  for (int iter = 0; iter < 200 && hi - lo > 1e-13; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (mean_rate(mid) < target_pi ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MissingnessSpec build_missingness_spec(const ScenarioConfig& config) {
  MissingnessSpec spec;
  spec.mechanism = config.mechanism;
  spec.eta = eta_values(config.mechanism, config.eta);
  spec.target_pi = target_rates(config.mechanism, config.eta, config.nonresponse);
  for (int arm = 0; arm < 2; ++arm) {
    for (int l = 0; l < 2; ++l) {
      const double target = spec.target_pi[arm][l];
      // Zero targets are allowed for no-missingness runs.
      spec.alpha0[arm][l] = target == 0.0
                                ? -std::numeric_limits<double>::infinity()
                                : calibrate_alpha0(config.mechanism, spec.eta[arm], target);
    }
  }
  return spec;
}

namespace {

double linear_predictor_covariates(const MissingnessSpec& spec, const TrialRow& row) {
  switch (spec.mechanism) {
    case Mechanism::individual: return row.x;
    case Mechanism::cluster: return row.w;
    case Mechanism::both:
    case Mechanism::treatment: return row.x + row.w;
  }
  return 0.0;
}

void draw_flags_for_cluster(TrialDataset& data, const MissingnessSpec& spec, int cluster_id,
                            int outcome, RngStream& stream) {
  for (auto& row : data.rows) {
    if (row.cluster_id != cluster_id) continue;
    const double lp =
        spec.alpha0[row.arm][outcome] + spec.eta[row.arm] * linear_predictor_covariates(spec, row);
    row.set_observed(outcome, !stream.bernoulli(logistic(lp)));
  }
}

}  // namespace

TrialDataset impose_missingness(const TrialDataset& data, const MissingnessSpec& spec,
                                RngStream& stream, MissingnessStats* stats) {
  if (!data.fully_observed())
    throw std::invalid_argument("impose_missingness requires a fully observed dataset");

  TrialDataset result = data;
  for (auto& row : result.rows) {
    const double z = linear_predictor_covariates(spec, row);
    for (int l = 0; l < 2; ++l) {
      const double pi = logistic(spec.alpha0[row.arm][l] + spec.eta[row.arm] * z);
      row.set_observed(l, !stream.bernoulli(pi));
    }
  }

  // Whole-cluster non-response guard: re-draw an empty (cluster, outcome)
  // until at least one value is observed. The non-response rates of the study
  // were chosen to avoid whole-cluster missingness, so the mechanism is
  // defined conditional on every cluster retaining some data; the rejection
  // loop depends only on the R flags, which keeps the mechanism MAR.
  MissingnessStats local;
  constexpr int kMaxRedraws = 1000;
  for (int j = 1; j <= result.n_clusters; ++j) {
    for (int l = 0; l < 2; ++l) {
      const auto any_observed = [&] {
        for (const auto& row : result.rows)
          if (row.cluster_id == j && row.observed(l)) return true;
        return false;
      };
      if (any_observed()) continue;
      ++local.redrawn_clusters;
      int attempts = 0;
      do {
        draw_flags_for_cluster(result, spec, j, l, stream);
      } while (!any_observed() && ++attempts < kMaxRedraws);
      if (!any_observed()) ++local.fully_missing_clusters;
    }
  }
  if (stats) *stats = local;

  for (auto& row : result.rows) {
    if (!row.r1) row.y1 = std::numeric_limits<double>::quiet_NaN();
    if (!row.r2) row.y2 = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

}  // namespace crtmi
