#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "nemo/geometry.hpp"

namespace nemo {

/// One hidden ReLU layer followed by a linear output layer.
struct MlpHead {
  MatX w1;  // hidden x in
  VecX b1;
  MatX w2;  // out x hidden
  VecX b2;

  int inputs() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  int outputs() const { return static_cast<int>(w2.rows()); }
  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  static MlpHead zeros(int inputs, int hidden, int outputs);
  void set_zero();
  MlpHead& operator+=(const MlpHead& o);
  bool operator==(const MlpHead& o) const;
};

/// Scratch buffers of a head evaluation needed by its backward pass.
struct HeadActivations {
  VecX x;   // normalized input
  VecX z1;  // hidden pre-activation
};

void head_forward(const MlpHead& head, const Eigen::Ref<const VecX>& x, Eigen::Ref<VecX> z1,
                  Eigen::Ref<VecX> y);
/// Accumulates parameter gradients of <y_bar, head(x)> into `grad` and writes d/dx into x_bar.
void head_backward(const MlpHead& head, const Eigen::Ref<const VecX>& x, const Eigen::Ref<const VecX>& z1,
                   const Eigen::Ref<const VecX>& y_bar, MlpHead& grad, Eigen::Ref<VecX> x_bar);

/// He-uniform weights for the ReLU layer (bound sqrt(6 / fan_in)), zero biases,
/// and a zero output layer so a fresh network leaves the physics model untouched.
MlpHead init_weights(std::uint64_t seed, int inputs, int hidden, int outputs);

/// Per-feature affine normalization x_n = (x - mean) / scale.
struct Normalization {
  VecX mean;
  VecX scale;

  static Normalization identity(int size);
  bool operator==(const Normalization& o) const { return mean == o.mean && scale == o.scale; }
};

/// phi_theta = [head_t((p_dot, gamma)); head_r((omega, gamma))]: the translational
/// and rotational residuals never see each other's velocity.
struct SplitResidualNet {
  int rotor_count = 6;
  MlpHead translational;
  MlpHead rotational;
  Normalization norm_t;
  Normalization norm_r;

  static SplitResidualNet create(int rotor_count, int hidden, std::uint64_t seed);
  static SplitResidualNet zeros(int rotor_count, int hidden);

  int input_size() const { return 3 + rotor_count; }
  Eigen::Index parameter_count() const;
  /// Flat parameter vector: per head w1 (row-major), b1, w2 (row-major), b2; translational first.
  VecX pack() const;
  void unpack(const VecX& flat);
  void validate() const;
  bool operator==(const SplitResidualNet& o) const;
};

struct NetGradient {
  MlpHead translational;
  MlpHead rotational;

  static NetGradient zeros_like(const SplitResidualNet& net);
  void set_zero();
  VecX pack() const;
};

struct NetInputs {
  Vec3 pdot = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  VecX gamma;
};

Vec6 net_forward(const SplitResidualNet& net, const Vec3& pdot, const Vec3& omega, const VecX& gamma);

struct NetBackward {
  NetGradient grad;
  Vec3 pdot_bar = Vec3::Zero();
  Vec3 omega_bar = Vec3::Zero();
  VecX gamma_bar;
};

/// Exact reverse-mode gradient of <cotangent, net_forward(...)>.
NetBackward net_backward(const SplitResidualNet& net, const NetInputs& in, const Vec6& cotangent);

/// Forward/backward pair that keeps the activations between the two calls.
/// Allocation-free once constructed; used inside the unrolled integrator.
class NetEvaluator {
 public:
  explicit NetEvaluator(const SplitResidualNet& net);

  /// Evaluates phi_theta and stores activations in slot `slot`.
  Vec6 forward(int slot, const Vec3& pdot, const Vec3& omega, const VecX& gamma);
  /// Backward through slot `slot`; returns (p_dot_bar, omega_bar) and accumulates into grad.
  void backward(int slot, const Vec6& cotangent, NetGradient& grad, Vec3& pdot_bar, Vec3& omega_bar);
  void reserve(int slots);

 private:
  const SplitResidualNet& net_;
  MatX xt_, zt_, xr_, zr_;
  VecX raw_, y_, xbar_;
};

struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  VecX m;
  VecX v;

  static AdamState fresh(Eigen::Index size, double learning_rate = 0.001);
};

/// Bias-corrected Adam update in place.
void adam_step(VecX& params, const VecX& grads, AdamState& state);

inline constexpr int kCheckpointSchemaVersion = 1;

nlohmann::json net_to_json(const SplitResidualNet& net);
/// Throws SchemaMismatch on version, shape or rotor-count mismatch (expected_rotor_count < 0 skips the check).
SplitResidualNet net_from_json(const nlohmann::json& j, int expected_rotor_count = -1);

void save_checkpoint(const SplitResidualNet& net, const std::string& path);
SplitResidualNet load_checkpoint(const std::string& path, int expected_rotor_count = -1);

}  // namespace nemo
