#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nemo/neuralnet.hpp"
#include "nemo/simulator.hpp"
#include "nemo/vehicle.hpp"

namespace nemo {

enum class ObserverKind { MO, NeMO };

std::string to_string(ObserverKind kind);

/// Diagonal K_I in 1/s; tau_i = 1 / K_I(i).
struct ObserverGains {
  Vec6 k = Vec6::Constant(10.0);

  static ObserverGains uniform(double k) { return {Vec6::Constant(k)}; }
  void validate() const;
};

struct ObserverState {
  ObserverKind kind = ObserverKind::MO;
  ObserverGains gains;
  RigidBodyModel nominal;
  std::optional<SplitResidualNet> net;  // present iff NeMO
  Vec6 rho_hat = Vec6::Zero();
  Wrench w_hat = Wrench::Zero();
};

/// rho_hat = M_nominal v0, w_hat = 0. NeMO requires a network (ConfigError otherwise).
ObserverState observer_init(ObserverKind kind, const ObserverGains& gains, const VehicleParams& nominal_params,
                            const Twist& v0, std::optional<SplitResidualNet> net = std::nullopt);

/// w_hat = K_I (M v - rho_hat); rho_hat += dt (-h(v) + G(R) gamma + w_hat).
Wrench mo_step(ObserverState& state, const Twist& v, const Mat3& R, const VecX& gamma, double dt);
/// As mo_step with M phi_theta(p_dot, omega, gamma) added to the momentum propagation.
Wrench nemo_step(ObserverState& state, const Twist& v, const Mat3& R, const VecX& gamma, double dt);
/// Dispatches on state.kind.
Wrench observer_step(ObserverState& state, const Twist& v, const Mat3& R, const VecX& gamma, double dt);

struct ObserverConfig {
  ObserverKind kind = ObserverKind::MO;
  ObserverGains gains;
  VehicleParams nominal;
  std::optional<SplitResidualNet> net;
};

struct ObserverSeries {
  std::vector<double> t;
  std::vector<Wrench> estimate;
  std::vector<Wrench> truth;

  std::size_t size() const { return t.size(); }
};

/// Streams the logged (v, R, gamma) through the observer at the episode sample time.
ObserverSeries run_observer(const Episode& episode, const ObserverConfig& config);

}  // namespace nemo
