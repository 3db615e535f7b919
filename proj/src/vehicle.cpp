#include "nemo/vehicle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "nemo/error.hpp"

namespace nemo {

using geometry::skew;

Mat3 RotorConfig::frame() const {
  return geometry::rot_z(arm_angle) * geometry::rot_x(tilt_psi) * geometry::rot_y(tilt_beta);
}

void VehicleParams::validate() const {
  if (!(mass > 0.0) || !std::isfinite(mass)) throw InvalidSpec("vehicle: mass must be positive");
  if (!(inertia.array() > 0.0).all() || !inertia.allFinite()) {
    throw InvalidSpec("vehicle: inertia diagonal must be positive");
  }
  if (rotors.size() < 4) throw InvalidSpec("vehicle: at least 4 rotors required");
  for (const auto& r : rotors) {
    if (!(r.thrust_coeff > 0.0)) throw InvalidSpec("vehicle: rotor thrust coefficient must be positive");
    if (r.spin != 1 && r.spin != -1) throw InvalidSpec("vehicle: rotor spin must be +1 or -1");
    if (std::abs(r.tilt_psi) >= std::numbers::pi / 2 || std::abs(r.tilt_beta) >= std::numbers::pi / 2) {
      throw InvalidSpec("vehicle: rotor tilt must be below 90 degrees");
    }
  }
  if (!(thrust_coeff_ref > 0.0)) throw InvalidSpec("vehicle: thrust_coeff_ref must be positive");
}

VehicleParams make_symmetric_vehicle(double mass, const Vec3& inertia, const SymmetricLayout& layout,
                                     double gravity) {
  VehicleParams p;
  p.mass = mass;
  p.inertia = inertia;
  p.gravity = gravity;
  p.thrust_coeff_ref = layout.thrust_coeff;
  const double tilt = layout.tilt_deg * std::numbers::pi / 180.0;
  for (int i = 0; i < layout.rotor_count; ++i) {
    RotorConfig r;
    r.arm_angle = 2.0 * std::numbers::pi * i / layout.rotor_count;
    r.position = layout.arm_length * Vec3(std::cos(r.arm_angle), std::sin(r.arm_angle), 0.0);
    const bool even = (i % 2) == 0;
    r.tilt_psi = even ? tilt : -tilt;
    r.spin = even ? 1 : -1;
    r.thrust_coeff = layout.thrust_coeff;
    r.drag_coeff = layout.drag_coeff;
    p.rotors.push_back(r);
  }
  p.validate();
  return p;
}

VehicleParams default_hexarotor() {
  return make_symmetric_vehicle(2.81, Vec3(0.115, 0.114, 0.194), SymmetricLayout{});
}

RigidBodyModel::RigidBodyModel(VehicleParams params) : params_(std::move(params)) {
  params_.validate();
  const int n = params_.rotor_count();
  body_forces_.resize(3, n);
  body_torques_.resize(3, n);
  for (int i = 0; i < n; ++i) {
    const RotorConfig& r = params_.rotors[i];
    const double gain = r.thrust_coeff / params_.thrust_coeff_ref;
    const Vec3 dir = r.frame() * Vec3::UnitZ();
    body_forces_.col(i) = gain * dir;
    body_torques_.col(i) = gain * (skew(r.position) + r.spin * r.drag_coeff * Mat3::Identity()) * dir;
  }
  inertia_ = params_.inertia.asDiagonal();
  inv_inertia_ = params_.inertia.cwiseInverse().asDiagonal();
  inv_mass_ << Vec3::Constant(1.0 / params_.mass), params_.inertia.cwiseInverse();
}

Vec6 RigidBodyModel::mass_diagonal() const {
  Vec6 m;
  m << Vec3::Constant(params_.mass), params_.inertia;
  return m;
}

MatX RigidBodyModel::allocation(const Mat3& R) const {
  MatX g(6, rotor_count());
  g.topRows<3>() = R * body_forces_;
  g.bottomRows<3>() = body_torques_;
  return g;
}

Wrench RigidBodyModel::actuator_wrench(const Mat3& R, const VecX& gamma) const {
  if (gamma.size() != rotor_count()) throw InvalidSpec("actuator_wrench: thrust vector size mismatch");
  if (!params_.allow_negative_thrust && (gamma.array() < 0.0).any()) {
    throw NegativeThrust("actuator_wrench: negative rotor thrust");
  }
  Wrench w;
  w.head<3>() = R * (body_forces_ * gamma);
  w.tail<3>() = body_torques_ * gamma;
  return w;
}

Vec6 RigidBodyModel::coriolis_gravity(const Twist& v) const {
  const Vec3 omega = v.tail<3>();
  Vec6 h;
  h.head<3>() = Vec3(0.0, 0.0, params_.mass * params_.gravity);
  h.tail<3>() = omega.cross(inertia_ * omega);
  return h;
}

Twist RigidBodyModel::acceleration(const Mat3& R, const Twist& v, const VecX& gamma,
                                   const Wrench& w_e) const {
  return inv_mass_.cwiseProduct(-coriolis_gravity(v) + actuator_wrench(R, gamma) + w_e);
}

Vec6 RigidBodyModel::momentum(const Twist& v) const { return mass_diagonal().cwiseProduct(v); }

MatX allocation_matrix(const VehicleParams& params, const Mat3& R) {
  return RigidBodyModel(params).allocation(R);
}

Wrench actuator_wrench(const VehicleParams& params, const Mat3& R, const VecX& gamma) {
  return RigidBodyModel(params).actuator_wrench(R, gamma);
}

Vec6 coriolis_gravity(const VehicleParams& params, const Twist& v) {
  return RigidBodyModel(params).coriolis_gravity(v);
}

Twist fp_dynamics(const VehicleParams& params, const State& state, const VecX& gamma,
                  const Wrench& w_e) {
  return RigidBodyModel(params).acceleration(state.R, state.v, gamma, w_e);
}

std::string to_string(ResidualVariant variant) {
  switch (variant) {
    case ResidualVariant::None: return "None";
    case ResidualVariant::G: return "G";
    case ResidualVariant::MG1: return "MG1";
    case ResidualVariant::MG2: return "MG2";
    case ResidualVariant::MGD: return "MGD";
  }
  return "None";
}

ResidualVariant parse_residual_variant(const std::string& name) {
  std::string key;
  for (char c : name) {
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (key == "NONE") return ResidualVariant::None;
  if (key == "G") return ResidualVariant::G;
  if (key == "MG1") return ResidualVariant::MG1;
  if (key == "MG2") return ResidualVariant::MG2;
  if (key == "MGD") return ResidualVariant::MGD;
  throw InvalidSpec("unknown residual variant '" + name + "'");
}

ResidualSpec ResidualSpec::preset(ResidualVariant variant) {
  ResidualSpec s;
  s.variant = variant;
  switch (variant) {
    case ResidualVariant::None:
      break;
    case ResidualVariant::G:
      s.tilt_error = 0.10;
      s.arm_error = -0.05;
      s.drag_error = -0.40;
      s.thrust_error = 0.40;
      break;
    case ResidualVariant::MG1:
    case ResidualVariant::MGD:
      s.mass_error = -0.025;
      s.inertia_error = 0.035;
      s.tilt_error = 0.05;
      s.arm_error = -0.025;
      s.drag_error = -0.20;
      s.thrust_error = 0.20;
      if (variant == ResidualVariant::MGD) {
        s.d1 = 0.1;
        s.d2 = 0.1;
      }
      break;
    case ResidualVariant::MG2:
      s.mass_error = -0.025;
      s.inertia_error = 0.035;
      s.tilt_error = 0.10;
      s.arm_error = -0.05;
      s.drag_error = -0.40;
      s.thrust_error = 0.40;
      break;
  }
  return s;
}

void ResidualSpec::validate() const {
  for (double e : {mass_error, inertia_error, tilt_error, arm_error, drag_error, thrust_error}) {
    if (!std::isfinite(e) || e <= -1.0) throw InvalidSpec("residual: relative errors must lie in (-1, inf)");
  }
  if (!std::isfinite(d1) || !std::isfinite(d2)) throw InvalidSpec("residual: d1/d2 must be finite");
  if (!has_unmodeled_dynamics() && (d1 != 0.0 || d2 != 0.0)) {
    throw InvalidSpec("residual: d1/d2 are only meaningful for the MGD variant");
  }
}

VehicleParams perturb_params(const VehicleParams& true_params, const ResidualSpec& spec) {
  spec.validate();
  VehicleParams p = true_params;
  p.mass *= 1.0 + spec.mass_error;
  p.inertia *= 1.0 + spec.inertia_error;
  for (auto& r : p.rotors) {
    r.tilt_psi *= 1.0 + spec.tilt_error;
    r.tilt_beta *= 1.0 + spec.tilt_error;
    r.position *= 1.0 + spec.arm_error;
    r.drag_coeff *= 1.0 + spec.drag_error;
    r.thrust_coeff *= 1.0 + spec.thrust_error;
  }
  if (!(p.mass > 0.0) || !(p.inertia.array() > 0.0).all()) {
    throw InvalidSpec("perturb_params: perturbed mass or inertia is non-positive");
  }
  p.validate();
  return p;
}

Twist residual_phi_d(const VehicleParams& true_params, const State& state, const VecX& gamma,
                     double d1, double d2) {
  const RigidBodyModel model(true_params);
  const Wrench w = d1 * state.v + d2 * model.actuator_wrench(state.R, gamma);
  return model.inverse_mass_diagonal().cwiseProduct(w);
}

TruePlant::TruePlant(VehicleParams true_params, ResidualSpec spec)
    : model_(std::move(true_params)), spec_(spec) {
  spec_.validate();
}

Twist TruePlant::unmodeled(const Mat3& R, const Twist& v, const VecX& gamma) const {
  if (!spec_.has_unmodeled_dynamics()) return Twist::Zero();
  const Wrench w = spec_.d1 * v + spec_.d2 * model_.actuator_wrench(R, gamma);
  return model_.inverse_mass_diagonal().cwiseProduct(w);
}

Twist TruePlant::acceleration(const Mat3& R, const Twist& v, const VecX& gamma,
                              const Wrench& w_e) const {
  Twist a = model_.acceleration(R, v, gamma, w_e);
  if (spec_.has_unmodeled_dynamics()) a += unmodeled(R, v, gamma);
  return a;
}

Twist residual_dynamics(const TruePlant& plant, const RigidBodyModel& nominal, const Mat3& R,
                        const Twist& v, const VecX& gamma) {
  return plant.acceleration(R, v, gamma, Wrench::Zero()) -
         nominal.acceleration(R, v, gamma, Wrench::Zero());
}

// JSON ----------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void to_json(nlohmann::json& j, const RotorConfig& r) {
  j = nlohmann::json{{"position", vec_json(r.position)}, {"arm_angle", r.arm_angle},
                     {"tilt_psi", r.tilt_psi},           {"tilt_beta", r.tilt_beta},
                     {"spin", r.spin},                   {"thrust_coeff", r.thrust_coeff},
                     {"drag_coeff", r.drag_coeff}};
}

void from_json(const nlohmann::json& j, RotorConfig& r) {
  r.position = json_vec3(j.at("position"), "rotor.position");
  r.arm_angle = j.value("arm_angle", std::atan2(r.position.y(), r.position.x()));
  r.tilt_psi = j.value("tilt_psi", 0.0);
  r.tilt_beta = j.value("tilt_beta", 0.0);
  r.spin = j.at("spin").get<int>();
  r.thrust_coeff = j.at("thrust_coeff").get<double>();
  r.drag_coeff = j.at("drag_coeff").get<double>();
}

void to_json(nlohmann::json& j, const VehicleParams& p) {
  j = nlohmann::json{{"mass", p.mass},
                     {"inertia", vec_json(p.inertia)},
                     {"gravity", p.gravity},
                     {"thrust_coeff_ref", p.thrust_coeff_ref},
                     {"allow_negative_thrust", p.allow_negative_thrust},
                     {"rotors", p.rotors}};
}

void from_json(const nlohmann::json& j, VehicleParams& p) {
  const double mass = j.value("mass", 2.81);
  const Vec3 inertia = j.contains("inertia") ? json_vec3(j.at("inertia"), "vehicle.inertia")
                                             : Vec3(0.115, 0.114, 0.194);
  const double gravity = j.value("gravity", 9.81);
  if (j.contains("rotors")) {
    p = VehicleParams{};
    p.mass = mass;
    p.inertia = inertia;
    p.gravity = gravity;
    p.rotors = j.at("rotors").get<std::vector<RotorConfig>>();
    p.thrust_coeff_ref = j.value("thrust_coeff_ref", p.rotors.empty() ? 11.75e-4 : p.rotors[0].thrust_coeff);
  } else {
    SymmetricLayout layout;
    if (j.contains("layout")) {
      const auto& l = j.at("layout");
      layout.rotor_count = l.value("rotor_count", layout.rotor_count);
      layout.arm_length = l.value("arm_length", layout.arm_length);
      layout.tilt_deg = l.value("tilt_deg", layout.tilt_deg);
      layout.thrust_coeff = l.value("thrust_coeff", layout.thrust_coeff);
      layout.drag_coeff = l.value("drag_coeff", layout.drag_coeff);
    }
    p = make_symmetric_vehicle(mass, inertia, layout, gravity);
    p.thrust_coeff_ref = j.value("thrust_coeff_ref", p.thrust_coeff_ref);
  }
  p.allow_negative_thrust = j.value("allow_negative_thrust", false);
  p.validate();
}

void to_json(nlohmann::json& j, const ResidualSpec& s) {
  j = nlohmann::json{{"variant", to_string(s.variant)}, {"mass_error", s.mass_error},
                     {"inertia_error", s.inertia_error}, {"tilt_error", s.tilt_error},
                     {"arm_error", s.arm_error},         {"drag_error", s.drag_error},
                     {"thrust_error", s.thrust_error},   {"d1", s.d1},
                     {"d2", s.d2}};
}

void from_json(const nlohmann::json& j, ResidualSpec& s) {
  s = ResidualSpec::preset(parse_residual_variant(j.value("variant", std::string("None"))));
  s.mass_error = j.value("mass_error", s.mass_error);
  s.inertia_error = j.value("inertia_error", s.inertia_error);
  s.tilt_error = j.value("tilt_error", s.tilt_error);
  s.arm_error = j.value("arm_error", s.arm_error);
  s.drag_error = j.value("drag_error", s.drag_error);
  s.thrust_error = j.value("thrust_error", s.thrust_error);
  s.d1 = j.value("d1", s.d1);
  s.d2 = j.value("d2", s.d2);
  s.validate();
}

}  // namespace nemo
