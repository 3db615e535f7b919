#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nemo/neuralnet.hpp"
#include "nemo/simulator.hpp"
#include "nemo/vehicle.hpp"

namespace nemo {

/// Hybrid model f_hat = f_nominal + phi_theta evaluated with w_e = 0.
struct KnodeModel {
  RigidBodyModel nominal;
  SplitResidualNet net;
  double sample_time = kDefaultSampleTime;
  ResidualSpec residual;  // which nominal model the net was trained against

  KnodeModel(RigidBodyModel nominal_model, SplitResidualNet residual_net,
             double ts = kDefaultSampleTime, ResidualSpec spec = {});

  /// Nominal = perturb_params(true_params, spec); fresh network from seed.
  static KnodeModel create(const VehicleParams& true_params, const ResidualSpec& spec, int hidden,
                           std::uint64_t seed, double ts = kDefaultSampleTime);
};

Twist knode_dynamics(const KnodeModel& model, const State& state, const VecX& gamma);

using EpisodeSet = std::shared_ptr<const std::vector<Episode>>;

inline EpisodeSet share(std::vector<Episode> episodes) {
  return std::make_shared<const std::vector<Episode>>(std::move(episodes));
}

/// Row z_i = (x_i, u_i ... u_{i+alpha}); rows are views into the source episodes.
struct CollectionRow {
  int episode = 0;
  std::size_t start = 0;
};

struct CollectionMatrix {
  EpisodeSet episodes;
  std::vector<int> episode_ids;  // subset of *episodes used by the rows
  int alpha = 1;
  double sample_time = kDefaultSampleTime;
  std::vector<CollectionRow> rows;

  std::size_t size() const { return rows.size(); }
  const Episode& episode(const CollectionRow& r) const { return (*episodes)[r.episode]; }
  const State& initial_state(const CollectionRow& r) const { return episode(r).states[r.start]; }
  /// u_{i+k}, k in [0, alpha].
  const VecX& input(const CollectionRow& r, int k) const { return episode(r).inputs[r.start + k]; }
  /// Logged state x_{i+k}, k in [0, alpha].
  const State& sample(const CollectionRow& r, int k) const { return episode(r).states[r.start + k]; }
};

/// Throws HorizonTooLong if alpha >= N for any used episode.
CollectionMatrix build_collection(EpisodeSet episodes, int alpha);
CollectionMatrix build_collection(EpisodeSet episodes, std::vector<int> episode_ids, int alpha);

/// alpha RK4 steps of knode_dynamics from x_i with zero-order-hold inputs.
std::vector<State> predict_multistep(const KnodeModel& model, const CollectionMatrix& z, const CollectionRow& row);
std::vector<State> predict_multistep(const KnodeModel& model, const State& x0, std::span<const VecX> inputs,
                                     int steps);

struct LossOptions {
  bool with_gradient = true;
  /// Stops the gradient between integration steps (diagnostic only).
  bool detach_between_steps = false;
};

struct LossResult {
  double loss = 0.0;
  VecX gradient;  // packed like SplitResidualNet::pack(); empty without gradient
};

/// Mean over rows of (1/alpha) sum_k ||v_hat(t_{i+k}) - v(t_{i+k})||^2, with the exact
/// gradient through the unrolled RK4 chain (including the SO(3) attitude path).
/// OpenMP over rows, ordered reduction: bit-identical to knode_loss_serial.
LossResult knode_loss(const KnodeModel& model, const CollectionMatrix& z, std::span<const std::size_t> rows,
                      const LossOptions& options = {});
LossResult knode_loss_serial(const KnodeModel& model, const CollectionMatrix& z,
                             std::span<const std::size_t> rows, const LossOptions& options = {});
/// Over every row of z.
LossResult knode_loss(const KnodeModel& model, const CollectionMatrix& z, const LossOptions& options = {});

struct TrainConfig {
  int alpha = 1;
  double batch_fraction = 0.01;
  double learning_rate = 0.001;
  int patience = 100;
  int max_epochs = 1000;
  double validation_fraction = 0.2;
  int hidden = 64;
  std::uint64_t seed = 0;
  bool verbose = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  KnodeModel model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::vector<int> train_episodes;
  std::vector<int> validation_episodes;
};

/// Episode-level split: returns (train ids, validation ids). At least one
/// episode goes to each side when two or more are available.
std::pair<std::vector<int>, std::vector<int>> split_episodes(int count, double validation_fraction,
                                                             std::uint64_t seed);

/// Per-feature mean and standard deviation of (p_dot, gamma) and (omega, gamma).
void fit_normalization(SplitResidualNet& net, const std::vector<Episode>& episodes, const std::vector<int>& ids);

/// Mini-batch Adam with early stopping on the validation loss; returns the best model.
TrainResult train(KnodeModel model, EpisodeSet episodes, const TrainConfig& config);

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

/// RMS per axis of phi_theta - (f_true - f_nominal) along the episodes.
Vec6 evaluate_residual_fit(const KnodeModel& model, const TruePlant& plant, const std::vector<Episode>& episodes);

/// RMS per axis of the network output alone.
Vec6 residual_output_rms(const KnodeModel& model, const std::vector<Episode>& episodes);

struct KnodeCheckpoint {
  SplitResidualNet net;
  ResidualSpec residual;
  int alpha = 1;
  double sample_time = kDefaultSampleTime;
};

void save_knode_checkpoint(const KnodeModel& model, int alpha, const std::string& path);
KnodeCheckpoint load_knode_checkpoint(const std::string& path, int expected_rotor_count = -1);
KnodeModel model_from_checkpoint(const KnodeCheckpoint& ckpt, const VehicleParams& true_params);

}  // namespace nemo
