#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "nemo/knode.hpp"
#include "nemo/observers.hpp"
#include "nemo/simulator.hpp"

namespace nemo {

/// Everything a pipeline run needs. JSON sections: vehicle, residual,
/// trajectories, controller, observer, training (see README for the keys).
struct ExperimentConfig {
  SimulationSetup sim;
  ObserverGains observer;
  TrainConfig training;
  std::vector<ResidualVariant> residuals{ResidualVariant::G, ResidualVariant::MG1, ResidualVariant::MG2,
                                         ResidualVariant::MGD};
  std::vector<int> alphas{1, 25, 50};
  std::uint64_t seed = 1;

  /// Re-derives every stream from one seed: training episodes seed + i,
  /// test episodes seed + 100000 + i, network/shuffle seed.
  void apply_seed(std::uint64_t base);
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

}  // namespace nemo
