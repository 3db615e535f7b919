#include <cmath>

#include "doctest.h"
#include "nemo/error.hpp"
#include "nemo/experiments.hpp"
#include "nemo/observers.hpp"

using namespace nemo;

namespace {

Episode hover_episode(const ResidualSpec& residual, const WrenchProfile& wrench, double duration) {
  SimulationSetup setup;
  setup.residual = residual;
  EpisodeConfig cfg = make_scenario(setup, FlyingScenario::Hovering, 3, duration);
  cfg.wrench = wrench;
  return run_episode(cfg);
}

}  // namespace

TEST_CASE("perfect model and no wrench: the estimate stays at zero") {
  SimulationSetup setup;
  const Episode ep = run_episode(make_scenario(setup, FlyingScenario::FreeFlight, 9, 5.0));
  const ObserverSeries s = run_observer(ep, {ObserverKind::MO, {}, default_hexarotor(), std::nullopt});
  REQUIRE(s.size() == ep.size());
  CHECK(rms_error(s) < 1e-6);
}

TEST_CASE("discrete filter response to a step wrench") {
  // With matching models the forward-Euler observer obeys w_hat_k = w (1 - (1 - K dt)^k)
  // up to the in-step variation of G(R) gamma, which forward Euler sees as an O(dt) bias.
  const Wrench w = (Wrench() << 1.0, -2.0, 1.5, 0.1, -0.2, 0.05).finished();
  const Episode ep = hover_episode({}, WrenchProfile::constant(w), 2.0);
  ObserverGains gains = ObserverGains::uniform(10.0);
  const ObserverSeries s = run_observer(ep, {ObserverKind::MO, gains, default_hexarotor(), std::nullopt});
  for (std::size_t k = 0; k < s.size(); k += 25) {
    const Wrench expect = w * (1.0 - std::pow(1.0 - 10.0 * ep.sample_time, static_cast<double>(k)));
    CHECK((s.estimate[k] - expect).cwiseAbs().maxCoeff() < 5e-3);
  }
}

TEST_CASE("NeMO with a zero network is MO") {
  const auto spec = ResidualSpec::preset(ResidualVariant::MG1);
  const Episode ep = hover_episode(spec, WrenchProfile::pulses({0.5}, Wrench::Ones(), 0.5), 2.0);
  const VehicleParams nominal = perturb_params(default_hexarotor(), spec);
  const ObserverSeries mo = run_observer(ep, {ObserverKind::MO, {}, nominal, std::nullopt});
  const ObserverSeries ne = run_observer(ep, {ObserverKind::NeMO, {}, nominal, SplitResidualNet::create(6, 8, 1)});
  REQUIRE(mo.size() == ne.size());
  for (std::size_t k = 0; k < mo.size(); ++k) CHECK(mo.estimate[k] == ne.estimate[k]);
}

TEST_CASE("NeMO cancels a known residual") {
  // A network whose output is a constant c is equivalent to a nominal model with
  // an extra M c: MO then reports -M c on top of the true wrench, NeMO does not.
  SplitResidualNet net = SplitResidualNet::zeros(6, 4);
  net.translational.b2 << 0.0, 0.0, -0.5;
  const Episode ep = hover_episode({}, WrenchProfile::zero(), 2.0);
  const auto last = [](const ObserverSeries& s) { return s.estimate.back(); };
  const ObserverSeries ne = run_observer(ep, {ObserverKind::NeMO, {}, default_hexarotor(), net});
  CHECK(last(ne)(2) == doctest::Approx(0.5 * 2.81).epsilon(1e-3));
}

TEST_CASE("observer errors") {
  CHECK_THROWS_AS(observer_init(ObserverKind::NeMO, {}, default_hexarotor(), Twist::Zero()), ConfigError);
  CHECK_THROWS_AS(ObserverGains::uniform(0.0).validate(), ConfigError);
  CHECK_THROWS_AS(observer_init(ObserverKind::NeMO, {}, default_hexarotor(), Twist::Zero(), SplitResidualNet::zeros(4, 3)),
                  SchemaMismatch);
  ObserverState s = observer_init(ObserverKind::MO, {}, default_hexarotor(), Twist::Zero());
  CHECK_THROWS_AS(mo_step(s, Twist::Zero(), Mat3::Identity(), VecX::Constant(6, 4.0), 0.0), ConfigError);
  CHECK_THROWS_AS(mo_step(s, Twist::Constant(std::nan("")), Mat3::Identity(), VecX::Constant(6, 4.0), 0.004),
                  NonFiniteEstimate);
  CHECK(to_string(ObserverKind::NeMO) == "NeMO");
}

TEST_CASE("observer initial state") {
  const ObserverState zero = observer_init(ObserverKind::MO, {}, default_hexarotor(), Twist::Zero());
  CHECK(zero.rho_hat.isZero(0.0));
  CHECK(zero.w_hat.isZero(0.0));
  VehicleParams p = default_hexarotor();
  p.mass = 2.74;
  const ObserverState one = observer_init(ObserverKind::MO, {}, p, (Twist() << 1, 0, 0, 0, 0, 0).finished());
  CHECK(one.rho_hat == (Vec6() << 2.74, 0, 0, 0, 0, 0).finished());
}

TEST_CASE("perfect-model hover keeps the estimate at zero") {
  const Episode ep = hover_episode({}, WrenchProfile::zero(), 5.0);
  const ObserverSeries s = run_observer(ep, {ObserverKind::MO, {}, default_hexarotor(), std::nullopt});
  double worst = 0.0;
  for (const auto& w : s.estimate) worst = std::max(worst, w.cwiseAbs().maxCoeff());
  CHECK(worst < 1e-9);
}

TEST_CASE("translational axes are decoupled") {
  for (int axis = 0; axis < 3; ++axis) {
    Wrench w = Wrench::Zero();
    w(axis) = 1.5;
    const Episode ep = hover_episode({}, WrenchProfile::constant(w), 2.0);
    const ObserverSeries s = run_observer(ep, {ObserverKind::MO, {}, default_hexarotor(), std::nullopt});
    double leak = 0.0;
    for (const auto& e : s.estimate) {
      for (int j = 0; j < 6; ++j) {
        if (j != axis) leak = std::max(leak, std::abs(e(j)));
      }
    }
    CHECK(leak < 1e-9);
  }
}

TEST_CASE("filter law across gains") {
  const Wrench w = (Wrench() << 1.0, 2.0, -1.0, 0.0, 0.0, 0.0).finished();
  const Episode ep = hover_episode({}, WrenchProfile::constant(w), 2.0);
  for (double k : {2.0, 10.0, 25.0}) {
    const ObserverSeries s = run_observer(ep, {ObserverKind::MO, ObserverGains::uniform(k), default_hexarotor(), std::nullopt});
    double worst = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.t[i] < 3.0 / k) continue;
      for (int a = 0; a < 3; ++a) {
        worst = std::max(worst, std::abs(s.estimate[i](a) - w(a) * (1 - std::exp(-k * s.t[i]))) / std::abs(w(a)));
      }
    }
    CHECK(worst < 0.02);
  }
}

TEST_CASE("estimates stay bounded for K dt below 2") {
  SimulationSetup setup;
  setup.residual = ResidualSpec::preset(ResidualVariant::MG2);
  setup.trajectories.test_duration = 17.0;
  const auto nominal = perturb_params(setup.vehicle, setup.residual);
  for (const Episode& ep : run_episodes(test_configs(setup))) {
    for (double k : {10.0, 250.0, 450.0}) {
      const ObserverSeries s = run_observer(ep, {ObserverKind::MO, ObserverGains::uniform(k), nominal, std::nullopt});
      double worst = 0.0;
      for (const auto& e : s.estimate) worst = std::max(worst, e.cwiseAbs().maxCoeff());
      CHECK(worst < 100.0);
    }
  }
}

TEST_CASE("model mismatch contaminates MO") {
  SimulationSetup setup;
  setup.residual = ResidualSpec::preset(ResidualVariant::MG1);
  const Episode ep = run_episode(make_scenario(setup, FlyingScenario::FreeFlight, 12, 10.0));
  const auto nominal = perturb_params(setup.vehicle, setup.residual);
  const ObserverSeries s = run_observer(ep, {ObserverKind::MO, {}, nominal, std::nullopt});
  std::size_t above = 0;
  for (std::size_t i = 0; i < s.size(); ++i) above += s.estimate[i].norm() > 1.0 ? 1 : 0;
  CHECK(above > s.size() * 9 / 10);  // after the filter transient the estimate never returns to zero
  CHECK(rms_error(s) > 1.0);
}
