#include "nemo/neuralnet.hpp"

#include <cmath>
#include <random>

#include "nemo/csv.hpp"
#include "nemo/error.hpp"

namespace nemo {

using nlohmann::json;

MlpHead MlpHead::zeros(int inputs, int hidden, int outputs) {
  MlpHead h;
  h.w1 = MatX::Zero(hidden, inputs);
  h.b1 = VecX::Zero(hidden);
  h.w2 = MatX::Zero(outputs, hidden);
  h.b2 = VecX::Zero(outputs);
  return h;
}

void MlpHead::set_zero() {
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
}

MlpHead& MlpHead::operator+=(const MlpHead& o) {
  w1 += o.w1;
  b1 += o.b1;
  w2 += o.w2;
  b2 += o.b2;
  return *this;
}

bool MlpHead::operator==(const MlpHead& o) const {
  return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && w2.rows() == o.w2.rows() && w1 == o.w1 &&
         b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
}

void head_forward(const MlpHead& head, const Eigen::Ref<const VecX>& x, Eigen::Ref<VecX> z1,
                  Eigen::Ref<VecX> y) {
  z1.noalias() = head.w1 * x;
  z1 += head.b1;
  y = head.b2;
  y.noalias() += head.w2 * z1.cwiseMax(0.0);
}

void head_backward(const MlpHead& head, const Eigen::Ref<const VecX>& x, const Eigen::Ref<const VecX>& z1,
                   const Eigen::Ref<const VecX>& y_bar, MlpHead& grad, Eigen::Ref<VecX> x_bar) {
  grad.w2.noalias() += y_bar * z1.cwiseMax(0.0).transpose();
  grad.b2 += y_bar;
  VecX z_bar = head.w2.transpose() * y_bar;
  z_bar = (z1.array() > 0.0).select(z_bar, 0.0);
  grad.w1.noalias() += z_bar * x.transpose();
  grad.b1 += z_bar;
  x_bar.noalias() = head.w1.transpose() * z_bar;
}

MlpHead init_weights(std::uint64_t seed, int inputs, int hidden, int outputs) {
  MlpHead h = MlpHead::zeros(inputs, hidden, outputs);
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / inputs);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (int r = 0; r < hidden; ++r) {
    for (int c = 0; c < inputs; ++c) h.w1(r, c) = u(rng);
  }
  return h;
}

Normalization Normalization::identity(int size) { return {VecX::Zero(size), VecX::Ones(size)}; }

SplitResidualNet SplitResidualNet::zeros(int rotor_count, int hidden) {
  SplitResidualNet n;
  n.rotor_count = rotor_count;
  n.translational = MlpHead::zeros(3 + rotor_count, hidden, 3);
  n.rotational = MlpHead::zeros(3 + rotor_count, hidden, 3);
  n.norm_t = Normalization::identity(3 + rotor_count);
  n.norm_r = Normalization::identity(3 + rotor_count);
  return n;
}

SplitResidualNet SplitResidualNet::create(int rotor_count, int hidden, std::uint64_t seed) {
  SplitResidualNet n = zeros(rotor_count, hidden);
  n.translational = init_weights(seed, 3 + rotor_count, hidden, 3);
  n.rotational = init_weights(seed + 0x5851f42d4c957f2dULL, 3 + rotor_count, hidden, 3);
  return n;
}

Eigen::Index SplitResidualNet::parameter_count() const {
  return translational.parameter_count() + rotational.parameter_count();
}

namespace {

template <class Fn>
void for_each_block(MlpHead& h, Fn&& fn) {
  fn(h.w1);
  fn(h.b1);
  fn(h.w2);
  fn(h.b2);
}

template <class Fn>
void for_each_block(const MlpHead& h, Fn&& fn) {
  fn(h.w1);
  fn(h.b1);
  fn(h.w2);
  fn(h.b2);
}

void pack_head(const MlpHead& h, VecX& out, Eigen::Index& at) {
  for_each_block(h, [&](const auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      for (Eigen::Index c = 0; c < block.cols(); ++c) out(at++) = block(r, c);
    }
  });
}

void unpack_head(MlpHead& h, const VecX& in, Eigen::Index& at) {
  for_each_block(h, [&](auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = in(at++);
    }
  });
}

bool finite(const MlpHead& h) {
  return h.w1.allFinite() && h.b1.allFinite() && h.w2.allFinite() && h.b2.allFinite();
}

}  // namespace

VecX SplitResidualNet::pack() const {
  VecX out(parameter_count());
  Eigen::Index at = 0;
  pack_head(translational, out, at);
  pack_head(rotational, out, at);
  return out;
}

void SplitResidualNet::unpack(const VecX& flat) {
  if (flat.size() != parameter_count()) throw SchemaMismatch("unpack: parameter count mismatch");
  Eigen::Index at = 0;
  unpack_head(translational, flat, at);
  unpack_head(rotational, flat, at);
}

void SplitResidualNet::validate() const {
  const int in = input_size();
  for (const MlpHead* h : {&translational, &rotational}) {
    if (h->inputs() != in || h->outputs() != 3 || h->b1.size() != h->hidden() || h->w2.cols() != h->hidden() ||
        h->b2.size() != 3) {
      throw SchemaMismatch("network: inconsistent layer shapes");
    }
    if (!finite(*h)) throw SchemaMismatch("network: non-finite parameters");
  }
  for (const Normalization* n : {&norm_t, &norm_r}) {
    if (n->mean.size() != in || n->scale.size() != in) throw SchemaMismatch("network: normalization size");
    if (!(n->scale.array() > 0.0).all()) throw SchemaMismatch("network: normalization scale must be positive");
  }
}

bool SplitResidualNet::operator==(const SplitResidualNet& o) const {
  return rotor_count == o.rotor_count && translational == o.translational && rotational == o.rotational &&
         norm_t == o.norm_t && norm_r == o.norm_r;
}

NetGradient NetGradient::zeros_like(const SplitResidualNet& net) {
  NetGradient g;
  g.translational = MlpHead::zeros(net.translational.inputs(), net.translational.hidden(), 3);
  g.rotational = MlpHead::zeros(net.rotational.inputs(), net.rotational.hidden(), 3);
  return g;
}

void NetGradient::set_zero() {
  translational.set_zero();
  rotational.set_zero();
}

VecX NetGradient::pack() const {
  VecX out(translational.parameter_count() + rotational.parameter_count());
  Eigen::Index at = 0;
  pack_head(translational, out, at);
  pack_head(rotational, out, at);
  return out;
}

Vec6 net_forward(const SplitResidualNet& net, const Vec3& pdot, const Vec3& omega, const VecX& gamma) {
  NetEvaluator eval(net);
  return eval.forward(0, pdot, omega, gamma);
}

NetBackward net_backward(const SplitResidualNet& net, const NetInputs& in, const Vec6& cotangent) {
  const int n = net.rotor_count;
  NetBackward out;
  out.grad = NetGradient::zeros_like(net);
  out.gamma_bar = VecX::Zero(n);

  auto run = [&](const MlpHead& head, const Normalization& norm, const Vec3& vel, const Vec3& y_bar,
                 MlpHead& grad, Vec3& vel_bar) {
    VecX raw(3 + n);
    raw << vel, in.gamma;
    const VecX x = (raw - norm.mean).cwiseQuotient(norm.scale);
    VecX z1(head.hidden());
    VecX y(3);
    head_forward(head, x, z1, y);
    VecX x_bar(3 + n);
    head_backward(head, x, z1, y_bar, grad, x_bar);
    const VecX raw_bar = x_bar.cwiseQuotient(norm.scale);
    vel_bar = raw_bar.head<3>();
    out.gamma_bar += raw_bar.tail(n);
  };
  run(net.translational, net.norm_t, in.pdot, cotangent.head<3>(), out.grad.translational, out.pdot_bar);
  run(net.rotational, net.norm_r, in.omega, cotangent.tail<3>(), out.grad.rotational, out.omega_bar);
  return out;
}

NetEvaluator::NetEvaluator(const SplitResidualNet& net) : net_(net) {
  raw_.resize(net.input_size());
  y_.resize(3);
  xbar_.resize(net.input_size());
  reserve(1);
}

void NetEvaluator::reserve(int slots) {
  if (xt_.cols() >= slots) return;
  const int in = net_.input_size();
  xt_.resize(in, slots);
  xr_.resize(in, slots);
  zt_.resize(net_.translational.hidden(), slots);
  zr_.resize(net_.rotational.hidden(), slots);
}

Vec6 NetEvaluator::forward(int slot, const Vec3& pdot, const Vec3& omega, const VecX& gamma) {
  const int n = net_.rotor_count;
  Vec6 out;
  raw_.head<3>() = pdot;
  raw_.tail(n) = gamma;
  xt_.col(slot) = (raw_ - net_.norm_t.mean).cwiseQuotient(net_.norm_t.scale);
  head_forward(net_.translational, xt_.col(slot), zt_.col(slot), y_);
  out.head<3>() = y_;
  raw_.head<3>() = omega;
  xr_.col(slot) = (raw_ - net_.norm_r.mean).cwiseQuotient(net_.norm_r.scale);
  head_forward(net_.rotational, xr_.col(slot), zr_.col(slot), y_);
  out.tail<3>() = y_;
  return out;
}

void NetEvaluator::backward(int slot, const Vec6& cotangent, NetGradient& grad, Vec3& pdot_bar,
                            Vec3& omega_bar) {
  y_ = cotangent.head<3>();
  head_backward(net_.translational, xt_.col(slot), zt_.col(slot), y_, grad.translational, xbar_);
  pdot_bar = xbar_.head<3>().cwiseQuotient(net_.norm_t.scale.head<3>());
  y_ = cotangent.tail<3>();
  head_backward(net_.rotational, xr_.col(slot), zr_.col(slot), y_, grad.rotational, xbar_);
  omega_bar = xbar_.head<3>().cwiseQuotient(net_.norm_r.scale.head<3>());
}

AdamState AdamState::fresh(Eigen::Index size, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m = VecX::Zero(size);
  s.v = VecX::Zero(size);
  return s;
}

void adam_step(VecX& params, const VecX& grads, AdamState& s) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw SchemaMismatch("adam_step: shape mismatch");
  }
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.learning_rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.epsilon);
}

// Checkpoints -----------------------------------------------------------------

namespace {

json matrix_json(const MatX& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

json vector_json(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

MatX json_matrix(const json& a, Eigen::Index rows, Eigen::Index cols) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows * cols) {
    throw SchemaMismatch("checkpoint: array length does not match layer sizes");
  }
  MatX m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[k++].get<double>();
  }
  return m;
}

VecX json_vector(const json& a, Eigen::Index size) { return json_matrix(a, size, 1); }

json head_json(const MlpHead& h) {
  return json{{"sizes", {h.inputs(), h.hidden(), h.outputs()}},
              {"w1", matrix_json(h.w1)},
              {"b1", vector_json(h.b1)},
              {"w2", matrix_json(h.w2)},
              {"b2", vector_json(h.b2)}};
}

MlpHead json_head(const json& j, int expected_inputs) {
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  if (sizes.size() != 3) throw SchemaMismatch("checkpoint: layer sizes must have three entries");
  if (sizes[0] != expected_inputs) throw SchemaMismatch("checkpoint: head input size does not match rotor count");
  if (sizes[1] <= 0 || sizes[2] != 3) throw SchemaMismatch("checkpoint: bad hidden/output size");
  MlpHead h;
  h.w1 = json_matrix(j.at("w1"), sizes[1], sizes[0]);
  h.b1 = json_vector(j.at("b1"), sizes[1]);
  h.w2 = json_matrix(j.at("w2"), sizes[2], sizes[1]);
  h.b2 = json_vector(j.at("b2"), sizes[2]);
  return h;
}

json norm_json(const Normalization& n) { return json{{"mean", vector_json(n.mean)}, {"scale", vector_json(n.scale)}}; }

Normalization json_norm(const json& j, int size) {
  return {json_vector(j.at("mean"), size), json_vector(j.at("scale"), size)};
}

}  // namespace

json net_to_json(const SplitResidualNet& net) {
  return json{{"schema_version", kCheckpointSchemaVersion},
              {"rotor_count", net.rotor_count},
              {"translational", head_json(net.translational)},
              {"rotational", head_json(net.rotational)},
              {"normalization", {{"translational", norm_json(net.norm_t)}, {"rotational", norm_json(net.norm_r)}}}};
}

SplitResidualNet net_from_json(const json& j, int expected_rotor_count) {
  try {
    if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw SchemaMismatch("checkpoint: unsupported schema_version");
    }
    SplitResidualNet net;
    net.rotor_count = j.at("rotor_count").get<int>();
    if (expected_rotor_count >= 0 && net.rotor_count != expected_rotor_count) {
      throw SchemaMismatch("checkpoint: rotor count " + std::to_string(net.rotor_count) + " but " +
                           std::to_string(expected_rotor_count) + " expected");
    }
    net.translational = json_head(j.at("translational"), net.input_size());
    net.rotational = json_head(j.at("rotational"), net.input_size());
    net.norm_t = json_norm(j.at("normalization").at("translational"), net.input_size());
    net.norm_r = json_norm(j.at("normalization").at("rotational"), net.input_size());
    net.validate();
    return net;
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const SplitResidualNet& net, const std::string& path) {
  if (path.empty()) throw IoError("save_checkpoint: empty path");
  csv::write_file(path, net_to_json(net).dump(1) + "\n");
}

SplitResidualNet load_checkpoint(const std::string& path, int expected_rotor_count) {
  if (path.empty()) throw IoError("load_checkpoint: empty path");
  json j;
  try {
    j = json::parse(csv::read_file(path));
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("checkpoint: ") + e.what());
  }
  return net_from_json(j, expected_rotor_count);
}

}  // namespace nemo
