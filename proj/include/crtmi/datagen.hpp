#ifndef CRTMI_DATAGEN_HPP
#define CRTMI_DATAGEN_HPP

#include <optional>
#include <utility>
#include <vector>

#include "crtmi/rng.hpp"
#include "crtmi/trial.hpp"

namespace crtmi {

/// Optional restrictions of the canonical factor levels plus generation and
/// run-parameter overrides. Empty vectors mean "all canonical levels".
struct GridOverrides {
  std::vector<std::pair<double, double>> icc_pairs;
  std::vector<std::string> designs;  // by label
  std::vector<Mechanism> mechanisms;
  std::vector<EtaLevel> etas;
  std::vector<NonresponseLevel> nonresponses;
  GenParams gen;  // sigma/tau ignored; resolved per scenario
  std::optional<int> n_imputations;
  std::optional<int> n_replicates;
  std::optional<std::vector<Method>> methods;
};

const std::vector<std::pair<double, double>>& canonical_icc_pairs();
const std::vector<Design>& canonical_designs();

/// Full factorial grid (192 scenarios with no overrides). Scenario indices are
/// positions in the canonical full grid, so a restricted grid keeps the same
/// indices (and hence the same random streams) as the full run.
std::vector<ScenarioConfig> build_scenario_grid(std::uint64_t master_seed,
                                                const GridOverrides& overrides = {});

/// Split a total variance into (tau^2, sigma^2) so that
/// tau^2 / (tau^2 + sigma^2) equals the ICC exactly.
std::pair<double, double> variance_components_from_icc(double icc, double total_var);

std::vector<int> draw_cluster_sizes(const Design& design, RngStream& stream);

/// Complete clustered bivariate-normal dataset; every response flag true.
/// The first half of the clusters form the control arm.
TrialDataset generate_dataset(const ScenarioConfig& config, RngStream& stream);

}  // namespace crtmi

#endif
