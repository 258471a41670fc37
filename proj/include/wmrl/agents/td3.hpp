#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wmrl/data/dataset.hpp"
#include "wmrl/envs/env.hpp"
#include "wmrl/envs/reference.hpp"
#include "wmrl/nn/mlp.hpp"
#include "wmrl/worldmodel/world_model.hpp"

namespace wmrl::agents {

using data::Batch;
using nn::Matrix;
using nn::MlpGradients;
using nn::MlpNet;
using nn::Vector;

enum class Phase : std::uint8_t { offline = 0, online = 1 };

std::string to_string(Phase phase);

/// Noise scales (policy_noise, noise_clip, exploration_noise) are fractions of
/// the action bound, as in the reference TD3 implementation.
struct Hyperparams {
  double discount = 0.99;
  double tau = 0.005;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  std::size_t policy_delay = 2;
  double exploration_noise = 0.1;
  std::size_t batch_size = 256;
  double bc_weight = 2.5;
  double augment_fraction = 0.5;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  std::size_t hidden = 256;
  std::size_t hidden_layers = 2;

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

/// Actor, twin critics, their targets, and everything needed to resume or
/// hand off between the offline and online phases.
struct AgentCheckpoint {
  MlpNet actor;
  MlpNet critic1;
  MlpNet critic2;
  MlpNet target_actor;
  MlpNet target_critic1;
  MlpNet target_critic2;
  Hyperparams hyper;
  data::NormStats norm_stats;
  Phase phase = Phase::offline;
  std::string env_name;
  Vector action_low;
  Vector action_high;
  // Provenance of the run that produced this checkpoint.
  std::uint64_t run_seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t env_steps = 0;
  std::uint64_t warm_start_steps = 0;
  std::uint64_t buffer_capacity = 0;

  static AgentCheckpoint create(const envs::EnvSpec& env, const Hyperparams& hyper, data::NormStats norm_stats,
                                Rng& rng);

  double action_bound() const { return action_high[0]; }
  /// Deterministic actor on raw (un-normalized) observations.
  Vector act(const Vector& observation) const;
  envs::Policy policy() const;
  void sync_targets();

  bool same_parameters(const AgentCheckpoint& other) const;
  void save(const std::filesystem::path& path) const;
  static AgentCheckpoint load(const std::filesystem::path& path);
  std::string encode() const;
  static AgentCheckpoint decode(std::string_view bytes, const std::string& context);
};

/// Offline dataset with states and next states already normalized.
struct NormalizedDataset {
  data::OfflineDataset dataset;
  static NormalizedDataset make(const data::OfflineDataset& raw, const data::NormStats& stats);
};

struct AugmentResult {
  Batch batch;
  std::vector<std::size_t> substituted_rows;
};

/// Number of substitutions for a batch: floor(p * B) capped by the number of
/// non-terminal rows.
std::size_t augment_count(double fraction, std::size_t batch_size, std::size_t non_terminal);

/// Replaces the next state of a uniformly chosen subset of non-terminal rows by
/// a sampled world-model prediction. States, actions, rewards and done flags
/// are never touched. `batch` must be in the model's (normalized) space.
AugmentResult augment_batch(const Batch& batch, const wm::WorldModel& wm, double fraction, Rng& rng);

Matrix concat_cols(const Matrix& a, const Matrix& b);

/// y = r + discount * (1 - done) * min(Q1', Q2')(s', clip(pi'(s') + noise)).
Vector compute_td_target(const AgentCheckpoint& ckpt, const Batch& batch, Rng& rng);
/// Same with an explicit standard-normal smoothing draw (batch x act_dim).
Vector compute_td_target(const AgentCheckpoint& ckpt, const Batch& batch, const Matrix& smoothing_noise);

struct CriticGrads {
  MlpGradients critic1;
  MlpGradients critic2;
};

/// mean((Q1 - y)^2) + mean((Q2 - y)^2) on (s, a) of the batch.
double critic_loss(const AgentCheckpoint& ckpt, const Batch& batch, const Vector& targets,
                   CriticGrads* grads = nullptr);

struct ActorLoss {
  double loss = 0.0;
  double lambda = 1.0;
  double mean_q = 0.0;
  double bc = 0.0;
};

/// -lambda * mean Q1(s, pi(s)) + mean (pi(s) - a)^2 with lambda = alpha / mean|Q1|
/// (lambda treated as a constant).
ActorLoss td3bc_actor_loss(const AgentCheckpoint& ckpt, const Batch& batch, MlpGradients* actor_grads = nullptr);
/// -mean Q1(s, pi(s)).
ActorLoss td3_actor_loss(const AgentCheckpoint& ckpt, const Batch& batch, MlpGradients* actor_grads = nullptr);

struct StepMetrics {
  double critic_loss = 0.0;
  std::optional<ActorLoss> actor;
  std::size_t augmented = 0;
};

struct OfflineRngs {
  Rng agent;
  Rng augment;
  static OfflineRngs from_seed(std::uint64_t seed);
};

/// One TD3BC iteration (`iteration` counts from 1). A null or p = 0 world
/// model gives vanilla TD3BC.
StepMetrics offline_train_step(AgentCheckpoint& ckpt, const NormalizedDataset& data, const wm::WorldModel* wm,
                               std::uint64_t iteration, OfflineRngs& rngs);

/// Live environment plus the random streams of an online run.
struct OnlineEnv {
  std::unique_ptr<envs::Env> env;
  Vector observation;
  Rng episode_seeds;
  Rng exploration;
  Rng agent;
  std::uint64_t env_steps = 0;
  std::uint64_t episodes_finished = 0;

  static OnlineEnv make(const std::string& env_name, std::uint64_t seed);
};

/// Takes one exploratory environment step with the checkpoint's actor and
/// returns the raw transition to store. Resets the episode at the time limit.
data::Transition interact(const AgentCheckpoint& ckpt, OnlineEnv& online);

/// Rolls out `steps` exploratory steps into a fresh buffer of `capacity`.
data::ReplayBuffer warm_start_buffer(const AgentCheckpoint& ckpt, OnlineEnv& online, std::size_t steps,
                                     std::size_t capacity);

/// One TD3 iteration: interact, store, sample, update (`iteration` counts
/// from 1).
StepMetrics online_train_step(AgentCheckpoint& ckpt, OnlineEnv& online, data::ReplayBuffer& buffer,
                              std::uint64_t iteration);

}  // namespace wmrl::agents
