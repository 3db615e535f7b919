#include "nemo/observers.hpp"

#include "nemo/error.hpp"

namespace nemo {

std::string to_string(ObserverKind kind) { return kind == ObserverKind::MO ? "MO" : "NeMO"; }

void ObserverGains::validate() const {
  if (!(k.array() > 0.0).all() || !k.allFinite()) throw ConfigError("observer: gains must be positive");
}

ObserverState observer_init(ObserverKind kind, const ObserverGains& gains, const VehicleParams& nominal_params,
                            const Twist& v0, std::optional<SplitResidualNet> net) {
  gains.validate();
  if (kind == ObserverKind::NeMO && !net) throw ConfigError("observer: NeMO requires a trained network");
  if (kind == ObserverKind::MO) net.reset();
  ObserverState s{kind, gains, RigidBodyModel(nominal_params), std::move(net), Vec6::Zero(), Wrench::Zero()};
  if (s.net && s.net->rotor_count != s.nominal.rotor_count()) {
    throw SchemaMismatch("observer: network rotor count does not match the vehicle");
  }
  s.rho_hat = s.nominal.momentum(v0);
  return s;
}

namespace {

Wrench step(ObserverState& s, const Twist& v, const Mat3& R, const VecX& gamma, double dt, bool neural) {
  if (!(dt > 0.0)) throw ConfigError("observer: dt must be positive");
  s.w_hat = s.gains.k.cwiseProduct(s.nominal.momentum(v) - s.rho_hat);
  Vec6 rate = -s.nominal.coriolis_gravity(v) + s.nominal.actuator_wrench(R, gamma) + s.w_hat;
  if (neural) {
    const Vec6 phi = net_forward(*s.net, v.head<3>(), v.tail<3>(), gamma);
    rate += s.nominal.mass_diagonal().cwiseProduct(phi);
  }
  s.rho_hat += dt * rate;
  if (!s.w_hat.allFinite() || !s.rho_hat.allFinite()) throw NonFiniteEstimate("observer: non-finite estimate");
  return s.w_hat;
}

}  // namespace

Wrench mo_step(ObserverState& state, const Twist& v, const Mat3& R, const VecX& gamma, double dt) {
  return step(state, v, R, gamma, dt, false);
}

Wrench nemo_step(ObserverState& state, const Twist& v, const Mat3& R, const VecX& gamma, double dt) {
  if (!state.net) throw ConfigError("observer: NeMO requires a trained network");
  return step(state, v, R, gamma, dt, true);
}

Wrench observer_step(ObserverState& state, const Twist& v, const Mat3& R, const VecX& gamma, double dt) {
  return state.kind == ObserverKind::NeMO ? nemo_step(state, v, R, gamma, dt) : mo_step(state, v, R, gamma, dt);
}

ObserverSeries run_observer(const Episode& ep, const ObserverConfig& config) {
  ObserverSeries out;
  if (ep.size() == 0) return out;
  ObserverState s = observer_init(config.kind, config.gains, config.nominal, ep.states.front().v, config.net);
  out.t = ep.t;
  out.truth = ep.wrenches;
  out.estimate.reserve(ep.size());
  for (std::size_t i = 0; i < ep.size(); ++i) {
    out.estimate.push_back(observer_step(s, ep.states[i].v, ep.states[i].R, ep.inputs[i], ep.sample_time));
  }
  return out;
}

}  // namespace nemo
