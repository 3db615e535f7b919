#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "nemo/geometry.hpp"

namespace nemo {

/// Twist v = [p_dot (world, m/s); omega (body, rad/s)].
using Twist = Vec6;
/// Wrench w = [f (world, N); tau (body, N m)].
using Wrench = Vec6;

struct State {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Twist v = Twist::Zero();

  Vec3 pdot() const { return v.head<3>(); }
  Vec3 omega() const { return v.tail<3>(); }
};

/// One propeller. The rotor frame is R^B_A = Rz(arm_angle) * Rx(tilt_psi) * Ry(tilt_beta):
/// the rotor is first tilted about its own arm (x_A points radially outwards),
/// then placed around the body z axis.
struct RotorConfig {
  Vec3 position = Vec3::Zero();  // p^B_A, m
  double arm_angle = 0.0;        // rad
  double tilt_psi = 0.0;         // rad, about x_A
  double tilt_beta = 0.0;        // rad, about y_A
  int spin = 1;                  // +1 clockwise, -1 counter-clockwise
  double thrust_coeff = 0.0;     // c_f, N s^2
  double drag_coeff = 0.0;       // c_d, m

  Mat3 frame() const;
};

struct VehicleParams {
  double mass = 0.0;               // kg
  Vec3 inertia = Vec3::Zero();     // diagonal of J, kg m^2
  double gravity = 9.81;           // m/s^2
  std::vector<RotorConfig> rotors;
  /// Thrust coefficient the flight stack uses to turn commanded thrusts into
  /// rotor speeds. A rotor whose c_f differs from it produces
  /// (c_f / thrust_coeff_ref) times the commanded thrust.
  double thrust_coeff_ref = 11.75e-4;
  bool allow_negative_thrust = false;

  int rotor_count() const { return static_cast<int>(rotors.size()); }
  /// Throws InvalidSpec when an invariant is violated.
  void validate() const;
};

/// Symmetric hexagonal (or n-gonal) layout with alternating tilt and spin.
struct SymmetricLayout {
  int rotor_count = 6;
  double arm_length = 0.39;       // m
  double tilt_deg = 20.0;
  double thrust_coeff = 11.75e-4;
  double drag_coeff = 0.0203;
};

VehicleParams make_symmetric_vehicle(double mass, const Vec3& inertia,
                                     const SymmetricLayout& layout,
                                     double gravity = 9.81);

/// The tilted hexarotor used throughout the experiments.
VehicleParams default_hexarotor();

/// First-principles rigid-body model with the allocation precomputed in the body frame.
class RigidBodyModel {
 public:
  explicit RigidBodyModel(VehicleParams params);

  const VehicleParams& params() const { return params_; }
  int rotor_count() const { return params_.rotor_count(); }

  /// Body-frame unit thrust directions scaled by the thrust gain (3 x n).
  const MatX& body_forces() const { return body_forces_; }
  /// Body-frame torque per unit thrust (3 x n).
  const MatX& body_torques() const { return body_torques_; }

  Vec6 mass_diagonal() const;
  Vec6 inverse_mass_diagonal() const { return inv_mass_; }
  const Mat3& inverse_inertia() const { return inv_inertia_; }
  const Mat3& inertia() const { return inertia_; }

  /// G(R), 6 x n: world-frame force rows over body-frame torque rows.
  MatX allocation(const Mat3& R) const;
  Wrench actuator_wrench(const Mat3& R, const VecX& gamma) const;
  /// h(v) = [m g z_W; omega x J omega].
  Vec6 coriolis_gravity(const Twist& v) const;
  /// v_dot = M^-1 (-h(v) + G gamma + w_e).
  Twist acceleration(const Mat3& R, const Twist& v, const VecX& gamma,
                     const Wrench& w_e = Wrench::Zero()) const;
  Vec6 momentum(const Twist& v) const;

 private:
  VehicleParams params_;
  MatX body_forces_;
  MatX body_torques_;
  Mat3 inertia_;
  Mat3 inv_inertia_;
  Vec6 inv_mass_;
};

MatX allocation_matrix(const VehicleParams& params, const Mat3& R);
Wrench actuator_wrench(const VehicleParams& params, const Mat3& R, const VecX& gamma);
Vec6 coriolis_gravity(const VehicleParams& params, const Twist& v);
Twist fp_dynamics(const VehicleParams& params, const State& state, const VecX& gamma,
                  const Wrench& w_e);

enum class ResidualVariant { None, G, MG1, MG2, MGD };

std::string to_string(ResidualVariant variant);
/// Accepts "None", "G", "MG1"/"MG-1", "MG2"/"MG-2", "MGD" (case-insensitive).
ResidualVariant parse_residual_variant(const std::string& name);

/// Relative errors of the nominal model w.r.t. the true vehicle, plus the
/// unmodeled drag/friction coefficients of the MGD plant.
struct ResidualSpec {
  ResidualVariant variant = ResidualVariant::None;
  double mass_error = 0.0;
  double inertia_error = 0.0;
  double tilt_error = 0.0;
  double arm_error = 0.0;
  double drag_error = 0.0;
  double thrust_error = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;

  static ResidualSpec preset(ResidualVariant variant);
  bool has_unmodeled_dynamics() const { return variant == ResidualVariant::MGD; }
  void validate() const;
};

/// Nominal (erroneous) parameters: every listed parameter scaled by (1 + error).
VehicleParams perturb_params(const VehicleParams& true_params, const ResidualSpec& spec);

/// phi_d = M^-1 (d1 v + d2 G gamma), evaluated with the true parameters.
Twist residual_phi_d(const VehicleParams& true_params, const State& state, const VecX& gamma,
                     double d1, double d2);

/// The simulated vehicle: true rigid body plus the unmodeled terms of the spec.
class TruePlant {
 public:
  TruePlant(VehicleParams true_params, ResidualSpec spec);

  const RigidBodyModel& model() const { return model_; }
  const ResidualSpec& spec() const { return spec_; }

  Twist acceleration(const Mat3& R, const Twist& v, const VecX& gamma,
                     const Wrench& w_e) const;
  /// Unmodeled part only (zero unless the variant carries drag/friction).
  Twist unmodeled(const Mat3& R, const Twist& v, const VecX& gamma) const;

 private:
  RigidBodyModel model_;
  ResidualSpec spec_;
};

/// phi(x, u) = f_true(x, u) - f_nominal(x, u) with w_e = 0.
Twist residual_dynamics(const TruePlant& plant, const RigidBodyModel& nominal, const Mat3& R,
                        const Twist& v, const VecX& gamma);

void to_json(nlohmann::json& j, const RotorConfig& r);
void from_json(const nlohmann::json& j, RotorConfig& r);
void to_json(nlohmann::json& j, const VehicleParams& p);
void from_json(const nlohmann::json& j, VehicleParams& p);
void to_json(nlohmann::json& j, const ResidualSpec& s);
void from_json(const nlohmann::json& j, ResidualSpec& s);

}  // namespace nemo
