#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nemo/error.hpp"
#include "nemo/geometry.hpp"
#include "nemo/vehicle.hpp"

namespace nemo {

inline constexpr double kDefaultSampleTime = 1.0 / 250.0;

inline bool state_is_finite(const State& s) {
  return s.p.allFinite() && s.R.allFinite() && s.v.allFinite();
}

/// One classical RK4 step on (p, v) with the input held constant over the step.
/// R is advanced on SO(3): stage k uses R * exp(c_k dt omega_{k-1}) and the final
/// update uses the RK4-weighted average of the stage angular velocities.
/// `f(const State&, const VecX&) -> Twist` returns v_dot.
template <class Dynamics>
State rk4_step(Dynamics&& f, const State& s, const VecX& gamma, double dt) {
  const double half = 0.5 * dt;
  const Twist k1 = f(s, gamma);

  State s2;
  s2.v = s.v + half * k1;
  s2.R = s.R * geometry::so3_exp(half * s.omega());
  s2.p = s.p + half * s.pdot();
  const Twist k2 = f(s2, gamma);

  State s3;
  s3.v = s.v + half * k2;
  s3.R = s.R * geometry::so3_exp(half * s2.omega());
  s3.p = s.p + half * s2.pdot();
  const Twist k3 = f(s3, gamma);

  State s4;
  s4.v = s.v + dt * k3;
  s4.R = s.R * geometry::so3_exp(dt * s3.omega());
  s4.p = s.p + dt * s3.pdot();
  const Twist k4 = f(s4, gamma);

  const double sixth = dt / 6.0;
  State out;
  out.v = s.v + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.p = s.p + sixth * (s.pdot() + 2.0 * s2.pdot() + 2.0 * s3.pdot() + s4.pdot());
  out.R = s.R * geometry::so3_exp(sixth * (s.omega() + 2.0 * s2.omega() + 2.0 * s3.omega() + s4.omega()));
  if (!state_is_finite(out)) throw NonFiniteState("rk4_step: non-finite state");
  return out;
}

struct Reference {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double yaw = 0.0;
};

/// Figure-eight p(t) = offset + rotation * scale * (sin th, sin th cos th, 0.25 sin th), th = 2 pi t / period.
struct Lemniscate {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  double period = 10.0;
  Vec3 offset = Vec3::Zero();

  Reference at(double t) const;
};

Reference lemniscate_reference(double scale, const Mat3& rotation, double period, double t);

struct Trajectory {
  enum class Kind { Hover, Lemniscate };
  Kind kind = Kind::Hover;
  Vec3 hover_point = Vec3::Zero();
  Lemniscate lemniscate;

  Reference at(double t) const;
};

struct ControllerGains {
  Vec3 kp = Vec3::Constant(6.0);     // 1/s^2
  Vec3 kd = Vec3::Constant(4.5);     // 1/s
  Vec3 kr = Vec3::Constant(60.0);    // 1/s^2, scaled by J
  Vec3 kw = Vec3::Constant(16.0);    // 1/s, scaled by J
  double gamma_max = 15.0;           // N per rotor
};

/// Cascaded PD tracker for a fully-actuated vehicle: world-frame force with
/// gravity and acceleration feedforward, body torque toward a level attitude at
/// the reference yaw, allocated with the pseudo-inverse of G and saturated.
class TrackingController {
 public:
  TrackingController(const VehicleParams& true_params, ControllerGains gains);

  VecX thrusts(const State& state, const Reference& ref) const;
  /// Desired [world force; body torque] before allocation.
  Wrench desired_wrench(const State& state, const Reference& ref) const;
  double condition_number() const { return condition_; }

 private:
  RigidBodyModel model_;
  ControllerGains gains_;
  MatX body_pinv_;  // pinv of [F_B; T_B]
  double condition_ = 0.0;
};

VecX tracking_controller(const State& state, const Reference& ref, const ControllerGains& gains,
                         const VehicleParams& true_params);

struct WrenchProfile {
  enum class Kind { Zero, Pulses, Constant };
  Kind kind = Kind::Zero;
  std::vector<double> pulse_times{5.0, 10.0, 15.0};
  Wrench amplitude = (Wrench() << 2.0, 2.0, 2.0, 0.0, 0.0, 0.0).finished();
  double width = 1.0;

  static WrenchProfile zero() { return {}; }
  static WrenchProfile pulses(std::vector<double> times, const Wrench& amplitude, double width);
  static WrenchProfile constant(const Wrench& amplitude);
};

Wrench wrench_at(const WrenchProfile& profile, double t);

enum class FlyingScenario { Hovering, FreeFlight, HoveringExtWrench, FreeFlightExtWrench };

std::string to_string(FlyingScenario s);
FlyingScenario parse_scenario(const std::string& name);
inline constexpr FlyingScenario kAllScenarios[] = {
    FlyingScenario::Hovering, FlyingScenario::FreeFlight, FlyingScenario::HoveringExtWrench,
    FlyingScenario::FreeFlightExtWrench};

struct EpisodeMeta {
  std::string scenario = "Hovering";
  ResidualSpec residual;
  VehicleParams vehicle;
  std::uint64_t seed = 0;
};

struct Episode {
  double sample_time = kDefaultSampleTime;
  std::vector<double> t;
  std::vector<State> states;
  std::vector<VecX> inputs;
  std::vector<Wrench> wrenches;
  EpisodeMeta meta;

  std::size_t size() const { return t.size(); }
  int rotor_count() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
};

bool operator==(const Episode& a, const Episode& b);

struct EpisodeConfig {
  VehicleParams vehicle;          // true parameters
  ResidualSpec residual;          // only the unmodeled terms affect the plant
  Trajectory trajectory;
  WrenchProfile wrench;
  ControllerGains gains;
  double duration = 20.0;
  double sample_time = kDefaultSampleTime;
  /// Uniform initial position offset from the reference, m (drawn from the seed).
  double initial_jitter = 0.0;
  std::uint64_t seed = 0;
  std::string scenario = "Hovering";
  int reorthonormalize_every = 100;
};

/// Closed-loop simulation of the true plant, logged at every sample.
Episode run_episode(const EpisodeConfig& config);

/// Independent episodes in parallel; results keep the input order.
std::vector<Episode> run_episodes(const std::vector<EpisodeConfig>& configs);
std::vector<Episode> run_episodes_serial(const std::vector<EpisodeConfig>& configs);

/// Scenario generation --------------------------------------------------------

struct TrajectorySettings {
  double duration = 20.0;
  int train_hover = 2;
  int train_lemniscate = 7;
  double test_duration = 20.0;
  double scale_min = 0.8;
  double scale_max = 1.5;
  double period_min = 7.0;
  double period_max = 11.0;
  double max_plane_tilt_deg = 35.0;
  double hover_jitter = 0.05;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 100001;
};

struct SimulationSetup {
  VehicleParams vehicle = default_hexarotor();
  ResidualSpec residual;
  ControllerGains controller;
  TrajectorySettings trajectories;
  WrenchProfile pulses = WrenchProfile::pulses({5.0, 10.0, 15.0},
                                               (Wrench() << 2.0, 2.0, 2.0, 0.0, 0.0, 0.0).finished(), 1.0);
  double sample_time = kDefaultSampleTime;
};

EpisodeConfig make_scenario(const SimulationSetup& setup, FlyingScenario scenario, std::uint64_t seed,
                            double duration);
/// Hover episodes followed by lemniscates, all wrench-free, seeds train_seed + i.
std::vector<EpisodeConfig> training_configs(const SimulationSetup& setup);
/// One episode per flying scenario, seeds test_seed + i.
std::vector<EpisodeConfig> test_configs(const SimulationSetup& setup);

}  // namespace nemo
