#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "wmrl/data/dataset.hpp"
#include "wmrl/nn/mlp.hpp"

namespace wmrl::wm {

using nn::Matrix;
using nn::MlpGradients;
using nn::MlpNet;

enum class EncodeMode { sample, mean };

/// Direction of the KL regularizer. `posterior_to_prior` is the usual VAE
/// term KL(N(mu, sigma^2) || N(0, I)); `prior_to_posterior` swaps the
/// arguments.
enum class KlDirection : std::uint8_t { posterior_to_prior = 0, prior_to_posterior = 1 };

struct LossWeights {
  double recon = 1.0;
  double kl = 1.0;
  double state = 1.0;
  double latent = 1.0;
};

struct WorldModelConfig {
  std::size_t latent_dim = 0;  // 0 means obs_dim
  std::size_t hidden = 512;
  std::size_t hidden_layers = 3;
  KlDirection kl_direction = KlDirection::posterior_to_prior;
  LossWeights weights;
  double log_var_min = -10.0;
  double log_var_max = 4.0;
};

/// Variational encoder, decoder and residual latent transition model.
struct WorldModel {
  MlpNet encoder;     // obs -> [mu, log_var]
  MlpNet decoder;     // latent -> obs
  MlpNet transition;  // [latent, action] -> delta
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::size_t latent_dim = 0;
  bool trained_on_normalized = true;
  data::NormStats norm_stats;
  WorldModelConfig config;

  static WorldModel create(std::size_t obs_dim, std::size_t act_dim, const WorldModelConfig& config, Rng& rng);

  void save(const std::filesystem::path& path) const;
  static WorldModel load(const std::filesystem::path& path);
  void write(BinaryWriter& out) const;
  static WorldModel read(BinaryReader& in);
};

struct Encoding {
  Matrix z;
  Matrix mu;
  Matrix log_var;  // clamped
};

Encoding encode(const WorldModel& wm, const Matrix& states, Rng& rng, EncodeMode mode);

/// Mean over the batch of 0.5 * sum_d (mu^2 + sigma^2 - log sigma^2 - 1).
double kl_to_standard_normal(const Matrix& mu, const Matrix& log_var);
/// Mean over the batch of KL(N(0, I) || N(mu, sigma^2)).
double kl_from_standard_normal(const Matrix& mu, const Matrix& log_var);

/// z + transition([z, a]).
Matrix predict_next_latent(const WorldModel& wm, const Matrix& z, const Matrix& actions);

/// decode(predict_next_latent(encode(states))). `states_normalized` must match
/// the space the model was trained in.
Matrix generate_next_state(const WorldModel& wm, const Matrix& states, const Matrix& actions, Rng& rng,
                           EncodeMode mode, bool states_normalized = true);

/// Encoder mean of the next states: the detached target of the latent term.
Matrix latent_target(const WorldModel& wm, const Matrix& next_states);

struct WmLossReport {
  double total = 0.0;
  double recon_elbo = 0.0;    // MSE(decode(z_t), s_t)
  double kl = 0.0;
  double state_recon = 0.0;   // MSE(s~_{t+1}, s_{t+1})
  double latent_recon = 0.0;  // MSE(z~_{t+1}, mean-encoding of s_{t+1})
};

struct WmGradients {
  MlpGradients encoder;
  MlpGradients decoder;
  MlpGradients transition;
};

/// Composite loss on (states, actions, next_states), all in the model's
/// space. `noise` is the standard-normal draw for the reparameterized z_t
/// (batch x latent). Fills `grads` when non-null.
WmLossReport wm_loss(const WorldModel& wm, const Matrix& states, const Matrix& actions, const Matrix& next_states,
                     const Matrix& noise, WmGradients* grads = nullptr);
/// Same with the latent target given explicitly. No gradient flows into it.
WmLossReport wm_loss(const WorldModel& wm, const Matrix& states, const Matrix& actions, const Matrix& next_states,
                     const Matrix& noise, const Matrix& z_target, WmGradients* grads = nullptr);
WmLossReport wm_loss(const WorldModel& wm, const data::Batch& batch, Rng& rng, WmGradients* grads = nullptr);

struct WmTrainConfig {
  std::size_t iterations = 10000;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  nn::AdamConfig adam;
  std::size_t record_every = 100;
  std::size_t eval_samples = 1024;
};

struct WmCurvePoint {
  std::size_t iteration = 0;
  WmLossReport loss;
};

/// Minibatch Adam on normalized states. The curve holds the loss on a fixed
/// evaluation subset (fixed noise) every `record_every` iterations and at the
/// end.
std::vector<WmCurvePoint> train_world_model(WorldModel& wm, const data::OfflineDataset& dataset,
                                            const data::NormStats& norm_stats, const WmTrainConfig& config);

}  // namespace wmrl::wm
