#include "nemo/knode.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include <omp.h>

#include "nemo/csv.hpp"

namespace nemo {

using geometry::skew;
using geometry::so3_exp;
using geometry::so3_right_jacobian;
using geometry::vee_asym;

KnodeModel::KnodeModel(RigidBodyModel nominal_model, SplitResidualNet residual_net, double ts, ResidualSpec spec)
    : nominal(std::move(nominal_model)), net(std::move(residual_net)), sample_time(ts), residual(spec) {
  if (!(sample_time > 0.0)) throw ConfigError("KnodeModel: sample time must be positive");
  if (net.rotor_count != nominal.rotor_count()) throw SchemaMismatch("KnodeModel: rotor count mismatch");
  net.validate();
}

KnodeModel KnodeModel::create(const VehicleParams& true_params, const ResidualSpec& spec, int hidden,
                              std::uint64_t seed, double ts) {
  return KnodeModel(RigidBodyModel(perturb_params(true_params, spec)),
                    SplitResidualNet::create(true_params.rotor_count(), hidden, seed), ts, spec);
}

Twist knode_dynamics(const KnodeModel& model, const State& state, const VecX& gamma) {
  return model.nominal.acceleration(state.R, state.v, gamma) +
         net_forward(model.net, state.pdot(), state.omega(), gamma);
}

CollectionMatrix build_collection(EpisodeSet episodes, std::vector<int> ids, int alpha) {
  if (!episodes || episodes->empty()) throw ConfigError("build_collection: no episodes");
  if (alpha < 1) throw ConfigError("build_collection: alpha must be >= 1");
  CollectionMatrix z;
  z.alpha = alpha;
  z.sample_time = episodes->front().sample_time;
  for (int id : ids) {
    const Episode& ep = episodes->at(static_cast<std::size_t>(id));
    if (ep.sample_time != z.sample_time) throw ConfigError("build_collection: non-uniform sample time");
    if (static_cast<std::size_t>(alpha) >= ep.size()) {
      throw HorizonTooLong("build_collection: alpha = " + std::to_string(alpha) + " but episode " +
                           std::to_string(id) + " has " + std::to_string(ep.size()) + " samples");
    }
    for (std::size_t i = 0; i + alpha < ep.size(); ++i) z.rows.push_back({id, i});
  }
  z.episode_ids = std::move(ids);
  z.episodes = std::move(episodes);
  return z;
}

CollectionMatrix build_collection(EpisodeSet episodes, int alpha) {
  if (!episodes) throw ConfigError("build_collection: no episodes");
  std::vector<int> ids(episodes->size());
  std::iota(ids.begin(), ids.end(), 0);
  return build_collection(std::move(episodes), std::move(ids), alpha);
}

std::vector<State> predict_multistep(const KnodeModel& model, const State& x0, std::span<const VecX> inputs,
                                     int steps) {
  if (static_cast<int>(inputs.size()) < steps) throw ConfigError("predict_multistep: not enough inputs");
  auto f = [&model](const State& s, const VecX& u) { return knode_dynamics(model, s, u); };
  std::vector<State> out;
  out.reserve(steps);
  State x = x0;
  for (int k = 0; k < steps; ++k) {
    x = rk4_step(f, x, inputs[k], model.sample_time);
    out.push_back(x);
  }
  return out;
}

std::vector<State> predict_multistep(const KnodeModel& model, const CollectionMatrix& z, const CollectionRow& row) {
  std::vector<VecX> inputs;
  for (int k = 0; k < z.alpha; ++k) inputs.push_back(z.input(row, k));
  return predict_multistep(model, z.initial_state(row), inputs, z.alpha);
}

// -----------------------------------------------------------------------------
// Differentiable unrolled RK4.
//
// Stage s of a step evaluates f at (v_s, R_s) with R_s = R exp(w_s):
//   w_2 = h/2 omega_1, w_3 = h/2 omega_2, w_4 = h omega_3,
// and the step ends at R' = R exp(h/6 (omega_1 + 2 omega_2 + 2 omega_3 + omega_4)).
// f(v, R) = M^-1 (-h(v) + [R F gamma; T gamma]) + phi_theta(p_dot, omega, gamma).

namespace {

struct StepTape {
  Twist v[4];
  Mat3 R;       // step start
  Mat3 Rs[4];   // stage rotations, Rs[0] == R
  Mat3 E[4];    // exp(w_s) for s = 1..3 (index 1..3), E[0] is the final update
  Vec3 w[4];    // arguments of E
  Vec3 fb;      // F gamma (body force)
  Vec3 tb;      // T gamma (body torque)
};

class RowKernel {
 public:
  explicit RowKernel(const KnodeModel& model, int alpha)
      : model_(model), eval_(model.net), grad_(NetGradient::zeros_like(model.net)) {
    eval_.reserve(4 * alpha);
    tape_.resize(alpha);
    pred_.resize(alpha);
    inv_m_ = model.nominal.inverse_mass_diagonal();
    mass_ = model.nominal.params().mass;
    gravity_ = model.nominal.params().gravity;
  }

  /// Returns the row loss; the row gradient (if requested) is left in grad().
  double run(const CollectionMatrix& z, const CollectionRow& row, const LossOptions& opt) {
    const int alpha = z.alpha;
    const double h = z.sample_time;
    const State& x0 = z.initial_state(row);
    Twist v = x0.v;
    Mat3 R = x0.R;
    double loss = 0.0;
    for (int k = 0; k < alpha; ++k) {
      forward_step(k, v, R, z.input(row, k), h);
      pred_[k] = v;
      loss += (v - z.sample(row, k + 1).v).squaredNorm();
    }
    loss /= alpha;
    if (!opt.with_gradient) return loss;

    grad_.set_zero();
    Twist v_bar = Twist::Zero();
    Mat3 R_bar = Mat3::Zero();
    for (int k = alpha - 1; k >= 0; --k) {
      if (opt.detach_between_steps) {
        v_bar.setZero();
        R_bar.setZero();
      }
      v_bar += (2.0 / alpha) * (pred_[k] - z.sample(row, k + 1).v);
      backward_step(k, h, v_bar, R_bar);
    }
    return loss;
  }

  const NetGradient& grad() const { return grad_; }

 private:
  Twist f(int slot, const Twist& v, const Mat3& R, const StepTape& t, const VecX& gamma) {
    const Vec3 omega = v.tail<3>();
    Vec6 h;
    h.head<3>() = Vec3(0.0, 0.0, mass_ * gravity_);
    h.tail<3>() = omega.cross(model_.nominal.inertia() * omega);
    Wrench wa;
    wa.head<3>() = R * t.fb;
    wa.tail<3>() = t.tb;
    return inv_m_.cwiseProduct(-h + wa) + eval_.forward(slot, v.head<3>(), omega, gamma);
  }

  void forward_step(int k, Twist& v, Mat3& R, const VecX& gamma, double h) {
    StepTape& t = tape_[k];
    t.R = R;
    t.fb = model_.nominal.body_forces() * gamma;
    t.tb = model_.nominal.body_torques() * gamma;
    const double half = 0.5 * h;
    const int base = 4 * k;

    t.v[0] = v;
    t.Rs[0] = R;
    const Twist k1 = f(base, t.v[0], t.Rs[0], t, gamma);

    t.w[1] = half * t.v[0].tail<3>();
    t.E[1] = so3_exp(t.w[1]);
    t.Rs[1] = R * t.E[1];
    t.v[1] = v + half * k1;
    const Twist k2 = f(base + 1, t.v[1], t.Rs[1], t, gamma);

    t.w[2] = half * t.v[1].tail<3>();
    t.E[2] = so3_exp(t.w[2]);
    t.Rs[2] = R * t.E[2];
    t.v[2] = v + half * k2;
    const Twist k3 = f(base + 2, t.v[2], t.Rs[2], t, gamma);

    t.w[3] = h * t.v[2].tail<3>();
    t.E[3] = so3_exp(t.w[3]);
    t.Rs[3] = R * t.E[3];
    t.v[3] = v + h * k3;
    const Twist k4 = f(base + 3, t.v[3], t.Rs[3], t, gamma);

    const double sixth = h / 6.0;
    v = v + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t.w[0] = sixth * (t.v[0].tail<3>() + 2.0 * t.v[1].tail<3>() + 2.0 * t.v[2].tail<3>() + t.v[3].tail<3>());
    t.E[0] = so3_exp(t.w[0]);
    R = R * t.E[0];
    if (!v.allFinite() || !R.allFinite()) throw NonFiniteState("knode: non-finite prediction");
  }

  /// Backward through f at stage slot; returns v_bar of the stage input and adds to R_bar_stage.
  Twist f_backward(int slot, const Twist& k_bar, const Twist& v, const StepTape& t, Mat3& R_bar_stage) {
    Vec3 pdot_bar;
    Vec3 omega_bar;
    eval_.backward(slot, k_bar, grad_, pdot_bar, omega_bar);
    const Vec6 q = inv_m_.cwiseProduct(k_bar);
    R_bar_stage.noalias() += q.head<3>() * t.fb.transpose();
    const Vec3 omega = v.tail<3>();
    const Mat3& J = model_.nominal.inertia();
    const Mat3 dgyro = skew(omega) * J - skew(J * omega);  // d(omega x J omega)/d omega
    omega_bar -= dgyro.transpose() * q.tail<3>();
    Twist out;
    out << pdot_bar, omega_bar;
    return out;
  }

  /// Pulls (v_bar, R_bar) from the end of step k back to its start.
  void backward_step(int k, double h, Twist& v_bar, Mat3& R_bar) {
    const StepTape& t = tape_[k];
    const double half = 0.5 * h;
    const double sixth = h / 6.0;
    const int base = 4 * k;
    const Twist v_out_bar = v_bar;
    const Mat3 R_out_bar = R_bar;

    Twist k_bar[4] = {sixth * v_out_bar, 2.0 * sixth * v_out_bar, 2.0 * sixth * v_out_bar, sixth * v_out_bar};
    Vec3 omega_extra[4];
    for (auto& e : omega_extra) e.setZero();

    Twist v_in_bar = v_out_bar;
    Mat3 R_in_bar = Mat3::Zero();

    // R' = R E0
    {
      const Mat3 R_out = t.R * t.E[0];
      R_in_bar.noalias() += R_out_bar * t.E[0].transpose();
      const Vec3 w_bar = so3_right_jacobian(t.w[0]).transpose() * vee_asym(R_out.transpose() * R_out_bar);
      omega_extra[0] += sixth * w_bar;
      omega_extra[1] += 2.0 * sixth * w_bar;
      omega_extra[2] += 2.0 * sixth * w_bar;
      omega_extra[3] += sixth * w_bar;
    }

    const double rot_scale[4] = {0.0, half, half, h};  // w_s = rot_scale[s] * omega_{s-1}
    const double vel_scale[4] = {0.0, half, half, h};  // v_s = v + vel_scale[s] * k_{s-1}
    for (int s = 3; s >= 0; --s) {
      Mat3 R_stage_bar = Mat3::Zero();
      Twist vs_bar = f_backward(base + s, k_bar[s], t.v[s], t, R_stage_bar);
      vs_bar.tail<3>() += omega_extra[s];
      if (s == 0) {
        v_in_bar += vs_bar;
        R_in_bar += R_stage_bar;
        break;
      }
      // R_s = R E_s, E_s = exp(rot_scale * omega_{s-1})
      R_in_bar.noalias() += R_stage_bar * t.E[s].transpose();
      const Vec3 w_bar =
          so3_right_jacobian(t.w[s]).transpose() * vee_asym(t.Rs[s].transpose() * R_stage_bar);
      omega_extra[s - 1] += rot_scale[s] * w_bar;
      // v_s = v + c k_{s-1}
      v_in_bar += vs_bar;
      k_bar[s - 1] += vel_scale[s] * vs_bar;
    }
    v_bar = v_in_bar;
    R_bar = R_in_bar;
  }

  const KnodeModel& model_;
  NetEvaluator eval_;
  NetGradient grad_;
  std::vector<StepTape> tape_;
  std::vector<Twist> pred_;
  Vec6 inv_m_;
  double mass_ = 0.0;
  double gravity_ = 0.0;
};

void check_rows(const CollectionMatrix& z, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ConfigError("knode_loss: empty batch");
  for (std::size_t r : rows) {
    if (r >= z.size()) throw ConfigError("knode_loss: row index out of range");
  }
}

LossResult finish(double loss_sum, VecX grad_sum, std::size_t count, bool with_grad) {
  LossResult out;
  const double inv = 1.0 / static_cast<double>(count);
  out.loss = loss_sum * inv;
  if (with_grad) out.gradient = grad_sum * inv;
  if (!std::isfinite(out.loss)) throw Diverged("knode_loss: non-finite loss");
  return out;
}

}  // namespace

LossResult knode_loss_serial(const KnodeModel& model, const CollectionMatrix& z, std::span<const std::size_t> rows,
                             const LossOptions& options) {
  check_rows(z, rows);
  RowKernel kernel(model, z.alpha);
  double loss_sum = 0.0;
  VecX grad_sum = VecX::Zero(options.with_gradient ? model.net.parameter_count() : 0);
  for (std::size_t r : rows) {
    loss_sum += kernel.run(z, z.rows[r], options);
    if (options.with_gradient) grad_sum += kernel.grad().pack();
  }
  return finish(loss_sum, std::move(grad_sum), rows.size(), options.with_gradient);
}

LossResult knode_loss(const KnodeModel& model, const CollectionMatrix& z, std::span<const std::size_t> rows,
                      const LossOptions& options) {
  check_rows(z, rows);
  const auto count = static_cast<std::ptrdiff_t>(rows.size());
  const Eigen::Index params = options.with_gradient ? model.net.parameter_count() : 0;
  std::vector<double> row_loss(rows.size());
  MatX row_grad(params, options.with_gradient ? count : 0);
  std::string error;

#pragma omp parallel
  {
    RowKernel kernel(model, z.alpha);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        row_loss[i] = kernel.run(z, z.rows[rows[i]], options);
        if (options.with_gradient) row_grad.col(i) = kernel.grad().pack();
      } catch (const std::exception& e) {
#pragma omp critical
        error = e.what();
        row_loss[i] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  if (!error.empty()) throw Diverged(error);

  // Ordered reduction, identical to the serial accumulation order.
  double loss_sum = 0.0;
  VecX grad_sum = VecX::Zero(params);
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    loss_sum += row_loss[i];
    if (options.with_gradient) grad_sum += row_grad.col(i);
  }
  return finish(loss_sum, std::move(grad_sum), rows.size(), options.with_gradient);
}

LossResult knode_loss(const KnodeModel& model, const CollectionMatrix& z, const LossOptions& options) {
  std::vector<std::size_t> all(z.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return knode_loss(model, z, all, options);
}

// Training ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (alpha < 1) throw ConfigError("training: alpha must be >= 1");
  if (!(batch_fraction > 0.0 && batch_fraction < 1.0)) throw ConfigError("training: batch_fraction must lie in (0,1)");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("training: validation_fraction must lie in (0,1)");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be positive");
  if (patience < 1 || max_epochs < 0 || hidden < 1) throw ConfigError("training: bad patience/max_epochs/hidden");
}

std::pair<std::vector<int>, std::vector<int>> split_episodes(int count, double validation_fraction,
                                                             std::uint64_t seed) {
  std::vector<int> ids(count);
  std::iota(ids.begin(), ids.end(), 0);
  if (count < 2) return {ids, ids};
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  int n_val = static_cast<int>(std::lround(validation_fraction * count));
  n_val = std::clamp(n_val, 1, count - 1);
  std::vector<int> val(ids.begin(), ids.begin() + n_val);
  std::vector<int> tr(ids.begin() + n_val, ids.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

void fit_normalization(SplitResidualNet& net, const std::vector<Episode>& episodes, const std::vector<int>& ids) {
  const int n = net.rotor_count;
  const int in = 3 + n;
  VecX sum_t = VecX::Zero(in), sq_t = VecX::Zero(in), sum_r = VecX::Zero(in), sq_r = VecX::Zero(in);
  double count = 0.0;
  VecX xt(in), xr(in);
  for (int id : ids) {
    const Episode& ep = episodes.at(static_cast<std::size_t>(id));
    for (std::size_t i = 0; i < ep.size(); ++i) {
      xt << ep.states[i].pdot(), ep.inputs[i];
      xr << ep.states[i].omega(), ep.inputs[i];
      sum_t += xt;
      sq_t += xt.cwiseAbs2();
      sum_r += xr;
      sq_r += xr.cwiseAbs2();
      count += 1.0;
    }
  }
  if (count == 0.0) return;
  auto make = [&](const VecX& sum, const VecX& sq) {
    Normalization nrm;
    nrm.mean = sum / count;
    nrm.scale = (sq / count - nrm.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < nrm.scale.size(); ++i) {
      if (!(nrm.scale(i) > 1e-6)) nrm.scale(i) = 1.0;
    }
    return nrm;
  };
  net.norm_t = make(sum_t, sq_t);
  net.norm_r = make(sum_r, sq_r);
}

TrainResult train(KnodeModel model, EpisodeSet episodes, const TrainConfig& config) {
  config.validate();
  if (!episodes || episodes->empty()) throw ConfigError("train: no episodes");
  auto [train_ids, val_ids] = split_episodes(static_cast<int>(episodes->size()), config.validation_fraction, config.seed);
  fit_normalization(model.net, *episodes, train_ids);

  const CollectionMatrix z_train = build_collection(episodes, train_ids, config.alpha);
  const CollectionMatrix z_val = build_collection(episodes, val_ids, config.alpha);
  const std::size_t batch =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.batch_fraction * z_train.size())));

  LossOptions eval_only;
  eval_only.with_gradient = false;

  TrainResult result{model, {}, 0, train_ids, val_ids};
  double best = knode_loss(model, z_val, eval_only).loss;
  result.history.push_back({0, knode_loss(model, z_train, eval_only).loss, best});
  if (config.verbose) {
    std::cerr << "epoch 0 train " << result.history.back().train_loss << " val " << best << "\n";
  }

  std::mt19937_64 rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<std::size_t> order(z_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  VecX params = model.net.pack();
  AdamState adam = AdamState::fresh(params.size(), config.learning_rate);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const LossResult lr = knode_loss(model, z_train, std::span<const std::size_t>(order.data() + start, len));
      if (!std::isfinite(lr.loss) || !lr.gradient.allFinite()) {
        throw Diverged("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      weighted += lr.loss * static_cast<double>(len);
      adam_step(params, lr.gradient, adam);
      model.net.unpack(params);
    }
    const double train_loss = weighted / static_cast<double>(order.size());
    const double val_loss = knode_loss(model, z_val, eval_only).loss;
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw Diverged("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, train_loss, val_loss});
    if (config.verbose) {
      std::cerr << "epoch " << epoch << " train " << train_loss << " val " << val_loss << "\n";
    }
    if (val_loss < best) {
      best = val_loss;
      result.best_epoch = epoch;
      result.model.net = model.net;
    } else if (epoch - result.best_epoch >= config.patience) {
      break;
    }
  }
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  std::string out = "epoch,train_loss,validation_loss\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "," + csv::format(h.train_loss) + "," + csv::format(h.validation_loss) + "\n";
  }
  csv::write_file(path, out);
}

Vec6 evaluate_residual_fit(const KnodeModel& model, const TruePlant& plant, const std::vector<Episode>& episodes) {
  Vec6 sq = Vec6::Zero();
  double count = 0.0;
  for (const Episode& ep : episodes) {
    for (std::size_t i = 0; i < ep.size(); ++i) {
      const State& s = ep.states[i];
      const Twist phi = residual_dynamics(plant, model.nominal, s.R, s.v, ep.inputs[i]);
      const Vec6 err = net_forward(model.net, s.pdot(), s.omega(), ep.inputs[i]) - phi;
      sq += err.cwiseAbs2();
      count += 1.0;
    }
  }
  return count > 0.0 ? Vec6((sq / count).cwiseSqrt()) : Vec6::Zero();
}

Vec6 residual_output_rms(const KnodeModel& model, const std::vector<Episode>& episodes) {
  Vec6 sq = Vec6::Zero();
  double count = 0.0;
  for (const Episode& ep : episodes) {
    for (std::size_t i = 0; i < ep.size(); ++i) {
      const State& s = ep.states[i];
      sq += net_forward(model.net, s.pdot(), s.omega(), ep.inputs[i]).cwiseAbs2();
      count += 1.0;
    }
  }
  return count > 0.0 ? Vec6((sq / count).cwiseSqrt()) : Vec6::Zero();
}

void save_knode_checkpoint(const KnodeModel& model, int alpha, const std::string& path) {
  if (path.empty()) throw IoError("save_knode_checkpoint: empty path");
  nlohmann::json j = net_to_json(model.net);
  j["residual"] = model.residual;
  j["alpha"] = alpha;
  j["sample_time"] = model.sample_time;
  csv::write_file(path, j.dump(1) + "\n");
}

KnodeCheckpoint load_knode_checkpoint(const std::string& path, int expected_rotor_count) {
  if (path.empty()) throw IoError("load_knode_checkpoint: empty path");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("checkpoint: ") + e.what());
  }
  KnodeCheckpoint c;
  c.net = net_from_json(j, expected_rotor_count);
  try {
    c.residual = j.at("residual").get<ResidualSpec>();
    c.alpha = j.at("alpha").get<int>();
    c.sample_time = j.at("sample_time").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("checkpoint: ") + e.what());
  }
  return c;
}

KnodeModel model_from_checkpoint(const KnodeCheckpoint& ckpt, const VehicleParams& true_params) {
  return KnodeModel(RigidBodyModel(perturb_params(true_params, ckpt.residual)), ckpt.net, ckpt.sample_time,
                    ckpt.residual);
}

}  // namespace nemo
