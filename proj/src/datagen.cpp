#include "crtmi/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crtmi {

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::individual: return "individual";
    case Mechanism::cluster: return "cluster";
    case Mechanism::both: return "both";
    case Mechanism::treatment: return "treatment";
  }
  return "?";
}

std::string to_string(EtaLevel e) { return e == EtaLevel::low ? "low" : "high"; }

std::string to_string(NonresponseLevel n) {
  return n == NonresponseLevel::equal ? "equal" : "different";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::CCA: return "CCA";
    case Method::SMI: return "SMI";
    case Method::FMI: return "FMI";
    case Method::MMI: return "MMI";
  }
  return "?";
}

const std::vector<std::pair<double, double>>& canonical_icc_pairs() {
  static const std::vector<std::pair<double, double>> pairs{
      {0.01, 0.01}, {0.20, 0.05}, {0.20, 0.20}, {0.60, 0.01}};
  return pairs;
}

const std::vector<Design>& canonical_designs() {
  static const std::vector<Design> designs = [] {
    std::vector<Design> d(3);
    d[0].label = "many-small";
    d[0].n_clusters = 50;
    d[0].size_rule = {SizeRule::Kind::fixed, 10, 0.0, 0.0};
    d[1].label = "few-large";
    d[1].n_clusters = 10;
    d[1].size_rule = {SizeRule::Kind::fixed, 50, 0.0, 0.0};
    d[2].label = "unbalanced";
    d[2].n_clusters = 30;
    d[2].size_rule = {SizeRule::Kind::gamma, 0, 20.0, 0.5};
    return d;
  }();
  return designs;
}

std::pair<double, double> variance_components_from_icc(double icc, double total_var) {
  if (!(icc >= 0.0) || !(icc < 1.0))
    throw std::invalid_argument("icc must lie in [0, 1)");
  if (!(total_var > 0.0)) throw std::invalid_argument("total_var must be positive");
  return {icc * total_var, (1.0 - icc) * total_var};
}

namespace {

template <typename T>
bool level_selected(const std::vector<T>& selected, const T& level) {
  return selected.empty() || std::find(selected.begin(), selected.end(), level) != selected.end();
}

void validate_overrides(const GridOverrides& ov) {
  for (const auto& p : ov.icc_pairs) {
    if (std::find(canonical_icc_pairs().begin(), canonical_icc_pairs().end(), p) ==
        canonical_icc_pairs().end())
      throw std::invalid_argument("unknown factor level: icc (" + std::to_string(p.first) +
                                  ", " + std::to_string(p.second) + ")");
  }
  for (const auto& label : ov.designs) {
    bool known = false;
    for (const auto& d : canonical_designs()) known = known || d.label == label;
    if (!known) throw std::invalid_argument("unknown factor level: design " + label);
  }
}

}  // namespace

std::vector<ScenarioConfig> build_scenario_grid(std::uint64_t master_seed,
                                                const GridOverrides& overrides) {
  validate_overrides(overrides);
  const std::vector<Mechanism> mechanisms{Mechanism::individual, Mechanism::cluster,
                                          Mechanism::both, Mechanism::treatment};
  const std::vector<EtaLevel> etas{EtaLevel::low, EtaLevel::high};
  const std::vector<NonresponseLevel> nonresponses{NonresponseLevel::equal,
                                                   NonresponseLevel::different};

  std::vector<ScenarioConfig> grid;
  int index = 0;
  for (Mechanism mech : mechanisms) {
    for (const Design& design : canonical_designs()) {
      for (const auto& icc : canonical_icc_pairs()) {
        for (EtaLevel eta : etas) {
          for (NonresponseLevel nr : nonresponses) {
            const int scenario_index = index++;
            if (!level_selected(overrides.mechanisms, mech)) continue;
            if (!overrides.designs.empty() &&
                std::find(overrides.designs.begin(), overrides.designs.end(), design.label) ==
                    overrides.designs.end())
              continue;
            if (!level_selected(overrides.icc_pairs, icc)) continue;
            if (!level_selected(overrides.etas, eta)) continue;
            if (!level_selected(overrides.nonresponses, nr)) continue;

            ScenarioConfig cfg;
            cfg.scenario_index = scenario_index;
            cfg.icc = {icc.first, icc.second};
            cfg.design = design;
            cfg.mechanism = mech;
            cfg.eta = eta;
            cfg.nonresponse = nr;
            cfg.gen = overrides.gen;
            for (int l = 0; l < 2; ++l) {
              auto [tau_sq, sigma_sq] =
                  variance_components_from_icc(cfg.icc[l], cfg.gen.total_var[l]);
              cfg.gen.tau[l] = std::sqrt(tau_sq);
              cfg.gen.sigma[l] = std::sqrt(sigma_sq);
            }
            cfg.n_imputations = overrides.n_imputations.value_or(10);
            cfg.n_replicates = overrides.n_replicates.value_or(1000);
            if (overrides.methods) cfg.methods = *overrides.methods;
            cfg.master_seed = master_seed;
            grid.push_back(std::move(cfg));
          }
        }
      }
    }
  }
  return grid;
}

std::vector<int> draw_cluster_sizes(const Design& design, RngStream& stream) {
  std::vector<int> sizes(design.n_clusters);
  if (design.size_rule.kind == SizeRule::Kind::fixed) {
    std::fill(sizes.begin(), sizes.end(), design.size_rule.fixed_size);
    return sizes;
  }
  const double cv = design.size_rule.gamma_cv;
  const double shape = 1.0 / (cv * cv);
  const double scale = design.size_rule.gamma_mean * cv * cv;
  for (int& s : sizes) {
    const double draw = draw_gamma(shape, scale, stream);
    s = std::max(2, static_cast<int>(std::lround(draw)));
  }
  return sizes;
}

TrialDataset generate_dataset(const ScenarioConfig& config, RngStream& stream) {
  const auto sizes = draw_cluster_sizes(config.design, stream);
  const int n_clusters = config.design.n_clusters;
  const Eigen::Matrix2d level1 = config.gen.level1_cov();
  const Eigen::Matrix2d level2 = config.gen.level2_cov();
  const Eigen::Vector2d zero = Eigen::Vector2d::Zero();

  TrialDataset data;
  data.n_clusters = n_clusters;
  for (int j = 0; j < n_clusters; ++j) {
    const int arm = j < n_clusters / 2 ? 0 : 1;
    const double w = stream.normal();
    const Eigen::VectorXd b = draw_mvn(zero, level2, stream);
    for (int i = 0; i < sizes[j]; ++i) {
      TrialRow row;
      row.cluster_id = j + 1;
      row.arm = arm;
      row.w = w;
      row.x = stream.normal();
      const Eigen::VectorXd e = draw_mvn(zero, level1, stream);
      for (int l = 0; l < 2; ++l) {
        const double y = config.gen.intercepts[l] + config.gen.beta[l] * arm +
                         config.gen.nu_x[l] * row.x + config.gen.nu_w[l] * w + b(l) + e(l);
        row.set_y(l, y);
      }
      data.rows.push_back(row);
    }
  }
  return data;
}

}  // namespace crtmi
