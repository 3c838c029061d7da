#ifndef CRTMI_MISSINGNESS_HPP
#define CRTMI_MISSINGNESS_HPP

#include <array>

#include "crtmi/rng.hpp"
#include "crtmi/trial.hpp"

namespace crtmi {

/// Calibrated MAR mechanism: per-arm association strengths and per-arm,
/// per-outcome intercepts reproducing the target non-response rates.
struct MissingnessSpec {
  Mechanism mechanism = Mechanism::individual;
  std::array<double, 2> eta{1.0, 1.0};                    // [arm]
  std::array<std::array<double, 2>, 2> alpha0{};          // [arm][outcome]
  std::array<std::array<double, 2>, 2> target_pi{};       // [arm][outcome]
};

struct MissingnessStats {
  int redrawn_clusters = 0;        // clusters re-drawn once to avoid emptiness
  int fully_missing_clusters = 0;  // still empty on an outcome after re-draw
};

/// Association-strength values per Table-1/Table-2 levels: for non-differential
/// mechanisms both entries coincide; for the treatment-differential mechanism
/// the control/intervention pair is (1, 2) at the low level and (1.5, 3) at the
/// high level.
std::array<double, 2> eta_values(Mechanism mechanism, EtaLevel level);

/// Target non-response probabilities, indexed [arm][outcome].
std::array<std::array<double, 2>, 2> target_rates(Mechanism mechanism, EtaLevel eta,
                                                  NonresponseLevel nonresponse);

/// Solve E[logistic(alpha0 + eta * Z)] = target_pi for alpha0, where Z is the
/// mechanism's covariate combination (variance 1 for a single covariate, 2 when
/// X and W both enter). Gauss-Hermite quadrature with bisection.
double calibrate_alpha0(Mechanism mechanism, double eta, double target_pi);

MissingnessSpec build_missingness_spec(const ScenarioConfig& config);

/// Impose MAR non-response on a fully observed dataset. Each outcome is
/// blanked independently with probability logistic of the mechanism's linear
/// predictor. A cluster left with no observed values on an outcome has its
/// flags for that outcome re-drawn once.
TrialDataset impose_missingness(const TrialDataset& data, const MissingnessSpec& spec,
                                RngStream& stream, MissingnessStats* stats = nullptr);

}  // namespace crtmi

#endif
