#include "nemo/simulator.hpp"

#include <algorithm>
#include <numbers>
#include <random>

namespace nemo {

Reference Lemniscate::at(double t) const {
  const double w = 2.0 * std::numbers::pi / period;
  const double th = w * t;
  const double s = std::sin(th);
  const double c = std::cos(th);
  const double s2 = std::sin(2.0 * th);
  const double c2 = std::cos(2.0 * th);
  Reference r;
  r.p = offset + rotation * (scale * Vec3(s, s * c, 0.25 * s));
  r.v = rotation * (scale * w * Vec3(c, c2, 0.25 * c));
  r.a = rotation * (scale * w * w * Vec3(-s, -2.0 * s2, -0.25 * s));
  return r;
}

Reference lemniscate_reference(double scale, const Mat3& rotation, double period, double t) {
  return Lemniscate{scale, rotation, period, Vec3::Zero()}.at(t);
}

Reference Trajectory::at(double t) const {
  if (kind == Kind::Lemniscate) return lemniscate.at(t);
  Reference r;
  r.p = hover_point;
  return r;
}

TrackingController::TrackingController(const VehicleParams& true_params, ControllerGains gains)
    : model_(true_params), gains_(gains) {
  MatX body(6, model_.rotor_count());
  body.topRows<3>() = model_.body_forces();
  body.bottomRows<3>() = model_.body_torques();
  Eigen::JacobiSVD<MatX> svd(body, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX sv = svd.singularValues();
  condition_ = sv(0) / sv(sv.size() - 1);
  if (sv.size() < 6 || !std::isfinite(condition_) || condition_ > 1e8) {
    throw AllocationSingular("tracking_controller: allocation matrix is (near) singular");
  }
  body_pinv_ = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

Wrench TrackingController::desired_wrench(const State& s, const Reference& ref) const {
  const VehicleParams& p = model_.params();
  const Vec3 acc = ref.a + gains_.kp.cwiseProduct(ref.p - s.p) + gains_.kd.cwiseProduct(ref.v - s.pdot());
  const Vec3 force = p.mass * acc + Vec3(0.0, 0.0, p.mass * p.gravity);

  const Mat3 r_des = geometry::rot_z(ref.yaw);
  const Vec3 e_r = 0.5 * geometry::vee_asym(r_des.transpose() * s.R);
  const Vec3 omega = s.omega();
  const Vec3 torque = model_.inertia() * (-gains_.kr.cwiseProduct(e_r) - gains_.kw.cwiseProduct(omega)) +
                      omega.cross(model_.inertia() * omega);
  Wrench w;
  w << force, torque;
  return w;
}

VecX TrackingController::thrusts(const State& s, const Reference& ref) const {
  const Wrench w = desired_wrench(s, ref);
  // pinv(diag(R, I) B) = pinv(B) diag(R^T, I)
  Wrench body;
  body << s.R.transpose() * w.head<3>(), w.tail<3>();
  VecX gamma = body_pinv_ * body;
  return gamma.cwiseMax(0.0).cwiseMin(gains_.gamma_max);
}

VecX tracking_controller(const State& state, const Reference& ref, const ControllerGains& gains,
                         const VehicleParams& true_params) {
  return TrackingController(true_params, gains).thrusts(state, ref);
}

WrenchProfile WrenchProfile::pulses(std::vector<double> times, const Wrench& amplitude, double width) {
  WrenchProfile p;
  p.kind = Kind::Pulses;
  p.pulse_times = std::move(times);
  p.amplitude = amplitude;
  p.width = width;
  return p;
}

WrenchProfile WrenchProfile::constant(const Wrench& amplitude) {
  WrenchProfile p;
  p.kind = Kind::Constant;
  p.amplitude = amplitude;
  return p;
}

Wrench wrench_at(const WrenchProfile& profile, double t) {
  switch (profile.kind) {
    case WrenchProfile::Kind::Zero:
      return Wrench::Zero();
    case WrenchProfile::Kind::Constant:
      return profile.amplitude;
    case WrenchProfile::Kind::Pulses:
      for (double start : profile.pulse_times) {
        if (t >= start && t < start + profile.width) return profile.amplitude;
      }
      return Wrench::Zero();
  }
  return Wrench::Zero();
}

std::string to_string(FlyingScenario s) {
  switch (s) {
    case FlyingScenario::Hovering: return "Hovering";
    case FlyingScenario::FreeFlight: return "FreeFlight";
    case FlyingScenario::HoveringExtWrench: return "HoveringExtWrench";
    case FlyingScenario::FreeFlightExtWrench: return "FreeFlightExtWrench";
  }
  return "Hovering";
}

FlyingScenario parse_scenario(const std::string& name) {
  for (FlyingScenario s : kAllScenarios) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown flying scenario '" + name + "'");
}

bool operator==(const Episode& a, const Episode& b) {
  if (a.sample_time != b.sample_time || a.t != b.t || a.size() != b.size()) return false;
  if (a.meta.scenario != b.meta.scenario || a.meta.seed != b.meta.seed) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.states[i].p != b.states[i].p || a.states[i].R != b.states[i].R || a.states[i].v != b.states[i].v) {
      return false;
    }
    if (a.inputs[i].size() != b.inputs[i].size() || a.inputs[i] != b.inputs[i]) return false;
    if (a.wrenches[i] != b.wrenches[i]) return false;
  }
  return true;
}

Episode run_episode(const EpisodeConfig& cfg) {
  if (!(cfg.sample_time > 0.0) || !(cfg.duration >= 0.0)) throw ConfigError("run_episode: bad timing");
  const TruePlant plant(cfg.vehicle, cfg.residual);
  const TrackingController controller(cfg.vehicle, cfg.gains);
  const auto samples = static_cast<std::size_t>(std::llround(cfg.duration / cfg.sample_time)) + 1;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> jitter(-cfg.initial_jitter, cfg.initial_jitter);

  const Reference r0 = cfg.trajectory.at(0.0);
  State x;
  x.p = r0.p;
  if (cfg.initial_jitter > 0.0) x.p += Vec3(jitter(rng), jitter(rng), jitter(rng));
  x.R = geometry::rot_z(r0.yaw);
  x.v.head<3>() = r0.v;

  Episode ep;
  ep.sample_time = cfg.sample_time;
  ep.meta = EpisodeMeta{cfg.scenario, cfg.residual, cfg.vehicle, cfg.seed};
  ep.t.reserve(samples);
  ep.states.reserve(samples);
  ep.inputs.reserve(samples);
  ep.wrenches.reserve(samples);

  for (std::size_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) * cfg.sample_time;
    const VecX gamma = controller.thrusts(x, cfg.trajectory.at(t));
    const Wrench w_e = wrench_at(cfg.wrench, t);
    ep.t.push_back(t);
    ep.states.push_back(x);
    ep.inputs.push_back(gamma);
    ep.wrenches.push_back(w_e);
    if (i + 1 == samples) break;

    auto f = [&](const State& s, const VecX& u) { return plant.acceleration(s.R, s.v, u, w_e); };
    try {
      x = rk4_step(f, x, gamma, cfg.sample_time);
    } catch (const NonFiniteState&) {
      throw NonFiniteState("run_episode: non-finite state at t = " + std::to_string(t + cfg.sample_time) + " s");
    }
    if (cfg.reorthonormalize_every > 0 && (i + 1) % cfg.reorthonormalize_every == 0 &&
        geometry::orthonormality_error(x.R) > 1e-9) {
      x.R = geometry::reorthonormalize(x.R);
    }
  }
  return ep;
}

std::vector<Episode> run_episodes_serial(const std::vector<EpisodeConfig>& configs) {
  std::vector<Episode> out;
  out.reserve(configs.size());
  for (const auto& c : configs) out.push_back(run_episode(c));
  return out;
}

std::vector<Episode> run_episodes(const std::vector<EpisodeConfig>& configs) {
  std::vector<Episode> out(configs.size());
  std::vector<std::string> errors(configs.size());
  const auto n = static_cast<std::ptrdiff_t>(configs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = run_episode(configs[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw NonFiniteState(e);
  }
  return out;
}

namespace {

Mat3 random_plane_rotation(std::mt19937_64& rng, double max_tilt) {
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> tilt(-max_tilt, max_tilt);
  const double y = yaw(rng);
  const double r = tilt(rng);
  const double p = tilt(rng);
  return geometry::rot_z(y) * geometry::rot_y(p) * geometry::rot_x(r);
}

}  // namespace

EpisodeConfig make_scenario(const SimulationSetup& setup, FlyingScenario scenario, std::uint64_t seed,
                            double duration) {
  EpisodeConfig cfg;
  cfg.vehicle = setup.vehicle;
  cfg.residual = setup.residual;
  cfg.gains = setup.controller;
  cfg.duration = duration;
  cfg.sample_time = setup.sample_time;
  cfg.seed = seed;
  cfg.scenario = to_string(scenario);

  // Trajectory parameters come from a stream decorrelated from the jitter stream.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const bool moving = scenario == FlyingScenario::FreeFlight || scenario == FlyingScenario::FreeFlightExtWrench;
  const bool wrenched =
      scenario == FlyingScenario::HoveringExtWrench || scenario == FlyingScenario::FreeFlightExtWrench;
  const auto& ts = setup.trajectories;
  if (moving) {
    std::uniform_real_distribution<double> scale(ts.scale_min, ts.scale_max);
    std::uniform_real_distribution<double> period(ts.period_min, ts.period_max);
    cfg.trajectory.kind = Trajectory::Kind::Lemniscate;
    cfg.trajectory.lemniscate.scale = scale(rng);
    cfg.trajectory.lemniscate.period = period(rng);
    cfg.trajectory.lemniscate.rotation = random_plane_rotation(rng, ts.max_plane_tilt_deg * std::numbers::pi / 180.0);
    cfg.initial_jitter = 0.0;
  } else {
    cfg.trajectory.kind = Trajectory::Kind::Hover;
    cfg.initial_jitter = ts.hover_jitter;
  }
  cfg.wrench = wrenched ? setup.pulses : WrenchProfile::zero();
  return cfg;
}

std::vector<EpisodeConfig> training_configs(const SimulationSetup& setup) {
  const auto& ts = setup.trajectories;
  std::vector<EpisodeConfig> out;
  std::uint64_t seed = ts.train_seed;
  for (int i = 0; i < ts.train_hover; ++i) {
    out.push_back(make_scenario(setup, FlyingScenario::Hovering, seed++, ts.duration));
  }
  for (int i = 0; i < ts.train_lemniscate; ++i) {
    out.push_back(make_scenario(setup, FlyingScenario::FreeFlight, seed++, ts.duration));
  }
  return out;
}

std::vector<EpisodeConfig> test_configs(const SimulationSetup& setup) {
  const auto& ts = setup.trajectories;
  std::vector<EpisodeConfig> out;
  std::uint64_t seed = ts.test_seed;
  for (FlyingScenario s : kAllScenarios) out.push_back(make_scenario(setup, s, seed++, ts.test_duration));
  return out;
}

}  // namespace nemo
