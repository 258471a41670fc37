#include "wmrl/agents/td3.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wmrl/core/error.hpp"

namespace wmrl::agents {

std::string to_string(Phase phase) { return phase == Phase::offline ? "offline" : "online"; }

void Hyperparams::validate() const {
  require(discount > 0.0 && discount < 1.0, ErrorKind::config, "discount must be in (0, 1)");
  require(tau > 0.0 && tau <= 1.0, ErrorKind::config, "tau must be in (0, 1]");
  require(augment_fraction >= 0.0 && augment_fraction <= 1.0, ErrorKind::config,
          "augment_fraction must be in [0, 1]");
  require(policy_delay >= 1, ErrorKind::config, "policy_delay must be >= 1");
  require(policy_noise >= 0.0 && noise_clip >= 0.0 && exploration_noise >= 0.0, ErrorKind::config,
          "noise scales must be >= 0");
  require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
  require(bc_weight >= 0.0, ErrorKind::config, "bc_weight must be >= 0");
  require(actor_lr > 0.0 && critic_lr > 0.0, ErrorKind::config, "learning rates must be > 0");
  require(hidden >= 1, ErrorKind::config, "hidden width must be >= 1");
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorKind::shape, "concat: row count mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// ---------------------------------------------------------------------------

AgentCheckpoint AgentCheckpoint::create(const envs::EnvSpec& env, const Hyperparams& hyper,
                                        data::NormStats norm_stats, Rng& rng) {
  hyper.validate();
  norm_stats.validate();
  require(norm_stats.dim() == env.obs_dim, ErrorKind::shape, "norm stats dim does not match env");
  const double bound = env.action_high[0];
  for (Eigen::Index i = 0; i < env.action_high.size(); ++i) {
    require(env.action_high[i] == bound && env.action_low[i] == -bound, ErrorKind::config,
            "agents require a symmetric action box with one bound for every dimension");
  }
  const auto actor_spec =
      nn::make_spec(env.obs_dim, hyper.hidden, hyper.hidden_layers, env.act_dim, nn::OutputActivation::tanh_scaled, bound);
  const auto critic_spec = nn::make_spec(env.obs_dim + env.act_dim, hyper.hidden, hyper.hidden_layers, 1);
  Rng actor_rng = rng.fork("actor");
  Rng c1_rng = rng.fork("critic1");
  Rng c2_rng = rng.fork("critic2");
  MlpNet actor(actor_spec, actor_rng);
  MlpNet critic1(critic_spec, c1_rng);
  MlpNet critic2(critic_spec, c2_rng);
  AgentCheckpoint ckpt{actor,       critic1, critic2, actor, critic1, critic2, hyper, std::move(norm_stats),
                       Phase::offline, env.name, env.action_low, env.action_high};
  return ckpt;
}

Vector AgentCheckpoint::act(const Vector& observation) const {
  const Vector s = norm_stats.normalize(observation);
  const Matrix out = actor.predict(s.transpose());
  return out.row(0).transpose();
}

envs::Policy AgentCheckpoint::policy() const {
  // The policy owns a frozen copy so it stays valid after the checkpoint moves.
  auto frozen = std::make_shared<const AgentCheckpoint>(*this);
  return [frozen](const Vector& obs, Rng&) { return frozen->act(obs); };
}

void AgentCheckpoint::sync_targets() {
  target_actor = actor;
  target_critic1 = critic1;
  target_critic2 = critic2;
}

bool AgentCheckpoint::same_parameters(const AgentCheckpoint& o) const {
  return actor.same_parameters(o.actor) && critic1.same_parameters(o.critic1) &&
         critic2.same_parameters(o.critic2) && target_actor.same_parameters(o.target_actor) &&
         target_critic1.same_parameters(o.target_critic1) && target_critic2.same_parameters(o.target_critic2);
}

NormalizedDataset NormalizedDataset::make(const data::OfflineDataset& raw, const data::NormStats& stats) {
  require(raw.size() > 0, ErrorKind::usage, "offline dataset is empty");
  require(stats.dim() == raw.obs_dim(), ErrorKind::shape, "norm stats dim does not match dataset");
  NormalizedDataset out;
  out.dataset.env_name = raw.env_name;
  out.dataset.flavor = raw.flavor;
  out.dataset.seed = raw.seed;
  out.dataset.transitions = data::TransitionColumns(raw.obs_dim(), raw.act_dim());
  out.dataset.transitions.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto t = raw.transitions.at(i);
    t.state = stats.normalize(t.state);
    t.next_state = stats.normalize(t.next_state);
    out.dataset.transitions.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t augment_count(double fraction, std::size_t batch_size, std::size_t non_terminal) {
  require(fraction >= 0.0 && fraction <= 1.0, ErrorKind::usage, "augment fraction must be in [0, 1]");
  // The small offset keeps exact products such as 0.29 * 100 from flooring low.
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(batch_size) + 1e-9));
  return std::min(k, non_terminal);
}

AugmentResult augment_batch(const Batch& batch, const wm::WorldModel& wm, double fraction, Rng& rng) {
  AugmentResult result{batch, {}};
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.dones[static_cast<Eigen::Index>(i)] == 0.0) candidates.push_back(i);
  }
  const std::size_t k = augment_count(fraction, batch.size(), candidates.size());
  if (k == 0) return result;
  for (std::size_t i = 0; i < k; ++i) std::swap(candidates[i], candidates[i + rng.index(candidates.size() - i)]);
  candidates.resize(k);
  std::sort(candidates.begin(), candidates.end());

  const auto n = static_cast<Eigen::Index>(k);
  Matrix states(n, batch.states.cols());
  Matrix actions(n, batch.actions.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    states.row(r) = batch.states.row(static_cast<Eigen::Index>(candidates[static_cast<std::size_t>(r)]));
    actions.row(r) = batch.actions.row(static_cast<Eigen::Index>(candidates[static_cast<std::size_t>(r)]));
  }
  const Matrix generated = wm::generate_next_state(wm, states, actions, rng, wm::EncodeMode::sample, true);
  for (Eigen::Index r = 0; r < n; ++r) {
    result.batch.next_states.row(static_cast<Eigen::Index>(candidates[static_cast<std::size_t>(r)])) =
        generated.row(r);
  }
  result.substituted_rows = std::move(candidates);
  return result;
}

// ---------------------------------------------------------------------------

Vector compute_td_target(const AgentCheckpoint& ckpt, const Batch& batch, const Matrix& smoothing_noise) {
  const auto& h = ckpt.hyper;
  const double bound = ckpt.action_bound();
  require(smoothing_noise.rows() == batch.next_states.rows() && smoothing_noise.cols() == ckpt.action_low.size(),
          ErrorKind::shape, "smoothing noise shape mismatch");
  const Matrix clipped_noise =
      (smoothing_noise * (h.policy_noise * bound)).cwiseMax(-h.noise_clip * bound).cwiseMin(h.noise_clip * bound);
  const Matrix next_actions =
      (ckpt.target_actor.predict(batch.next_states) + clipped_noise).cwiseMax(-bound).cwiseMin(bound);
  const Matrix sa = concat_cols(batch.next_states, next_actions);
  const Matrix q1 = ckpt.target_critic1.predict(sa);
  const Matrix q2 = ckpt.target_critic2.predict(sa);
  const Vector q = q1.col(0).cwiseMin(q2.col(0));
  return batch.rewards + (h.discount * (1.0 - batch.dones.array()) * q.array()).matrix();
}

Vector compute_td_target(const AgentCheckpoint& ckpt, const Batch& batch, Rng& rng) {
  Matrix noise(batch.next_states.rows(), ckpt.action_low.size());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
  return compute_td_target(ckpt, batch, noise);
}

double critic_loss(const AgentCheckpoint& ckpt, const Batch& batch, const Vector& targets, CriticGrads* grads) {
  const Matrix sa = concat_cols(batch.states, batch.actions);
  const double b = static_cast<double>(batch.size());
  auto f1 = ckpt.critic1.forward(sa);
  auto f2 = ckpt.critic2.forward(sa);
  const Vector e1 = f1.output.col(0) - targets;
  const Vector e2 = f2.output.col(0) - targets;
  const double loss = e1.squaredNorm() / b + e2.squaredNorm() / b;
  if (!std::isfinite(loss)) throw_error(ErrorKind::numeric, "critic loss is not finite");
  if (grads != nullptr) {
    grads->critic1 = ckpt.critic1.backward(f1.cache, Matrix((2.0 / b) * e1), true).params;
    grads->critic2 = ckpt.critic2.backward(f2.cache, Matrix((2.0 / b) * e2), true).params;
  }
  return loss;
}

namespace {

ActorLoss actor_loss(const AgentCheckpoint& ckpt, const Batch& batch, bool behavior_cloning,
                     MlpGradients* actor_grads) {
  const auto& h = ckpt.hyper;
  const double b = static_cast<double>(batch.size());
  auto pi = ckpt.actor.forward(batch.states);
  auto q = ckpt.critic1.forward(concat_cols(batch.states, pi.output));
  ActorLoss out;
  out.mean_q = q.output.mean();
  if (behavior_cloning) {
    out.lambda = h.bc_weight == 0.0 ? 0.0 : h.bc_weight / std::max(q.output.cwiseAbs().mean(), 1e-12);
    out.bc = (pi.output - batch.actions).squaredNorm() / static_cast<double>(pi.output.size());
  } else {
    out.lambda = 1.0;
  }
  out.loss = -out.lambda * out.mean_q + out.bc;
  if (!std::isfinite(out.loss)) throw_error(ErrorKind::numeric, "actor loss is not finite");
  if (actor_grads != nullptr) {
    const Matrix dq = Matrix::Constant(q.output.rows(), 1, -out.lambda / b);
    const auto back_q = ckpt.critic1.backward(q.cache, dq, false);
    Matrix dpi = back_q.input_grad.rightCols(pi.output.cols());
    if (behavior_cloning) dpi += (2.0 / static_cast<double>(pi.output.size())) * (pi.output - batch.actions);
    *actor_grads = ckpt.actor.backward(pi.cache, dpi, true).params;
  }
  return out;
}

void update_critics(AgentCheckpoint& ckpt, const Batch& batch, const Vector& y, StepMetrics& m) {
  CriticGrads g;
  m.critic_loss = critic_loss(ckpt, batch, y, &g);
  const nn::AdamConfig adam{ckpt.hyper.critic_lr};
  ckpt.critic1.adam_step(g.critic1, adam);
  ckpt.critic2.adam_step(g.critic2, adam);
}

void update_actor_and_targets(AgentCheckpoint& ckpt, const Batch& batch, bool behavior_cloning, StepMetrics& m) {
  MlpGradients g;
  m.actor = actor_loss(ckpt, batch, behavior_cloning, &g);
  ckpt.actor.adam_step(g, nn::AdamConfig{ckpt.hyper.actor_lr});
  const double tau = ckpt.hyper.tau;
  ckpt.target_critic1.polyak_update(ckpt.critic1, tau);
  ckpt.target_critic2.polyak_update(ckpt.critic2, tau);
  ckpt.target_actor.polyak_update(ckpt.actor, tau);
}

template <typename Fn>
StepMetrics as_training_error(std::uint64_t iteration, const char* phase, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    throw_error(ErrorKind::training,
                std::string(phase) + " training diverged at iteration " + std::to_string(iteration) + ": " + e.what());
  }
}

}  // namespace

ActorLoss td3bc_actor_loss(const AgentCheckpoint& ckpt, const Batch& batch, MlpGradients* actor_grads) {
  return actor_loss(ckpt, batch, true, actor_grads);
}

ActorLoss td3_actor_loss(const AgentCheckpoint& ckpt, const Batch& batch, MlpGradients* actor_grads) {
  return actor_loss(ckpt, batch, false, actor_grads);
}

OfflineRngs OfflineRngs::from_seed(std::uint64_t seed) {
  return OfflineRngs{Rng(derive_seed(seed, "agent")), Rng(derive_seed(seed, "augmentation"))};
}

StepMetrics offline_train_step(AgentCheckpoint& ckpt, const NormalizedDataset& data, const wm::WorldModel* wm,
                               std::uint64_t iteration, OfflineRngs& rngs) {
  require(ckpt.phase == Phase::offline, ErrorKind::usage, "offline_train_step needs an offline-phase checkpoint");
  return as_training_error(iteration, "offline", [&] {
    StepMetrics m;
    Batch batch = data::sample_batch(data.dataset, ckpt.hyper.batch_size, rngs.agent);
    if (wm != nullptr && ckpt.hyper.augment_fraction > 0.0) {
      auto aug = augment_batch(batch, *wm, ckpt.hyper.augment_fraction, rngs.augment);
      m.augmented = aug.substituted_rows.size();
      const Vector y = compute_td_target(ckpt, aug.batch, rngs.agent);
      update_critics(ckpt, batch, y, m);
    } else {
      const Vector y = compute_td_target(ckpt, batch, rngs.agent);
      update_critics(ckpt, batch, y, m);
    }
    if (iteration % ckpt.hyper.policy_delay == 0) update_actor_and_targets(ckpt, batch, true, m);
    ckpt.iteration = iteration;
    return m;
  });
}

// ---------------------------------------------------------------------------

OnlineEnv OnlineEnv::make(const std::string& env_name, std::uint64_t seed) {
  OnlineEnv o{envs::make_env(env_name), {}, Rng(derive_seed(seed, "env")), Rng(derive_seed(seed, "exploration")),
              Rng(derive_seed(seed, "agent"))};
  o.observation = o.env->reset(o.episode_seeds.next_u64());
  return o;
}

data::Transition interact(const AgentCheckpoint& ckpt, OnlineEnv& online) {
  require(online.env->spec().name == ckpt.env_name, ErrorKind::usage, "checkpoint and environment differ");
  const double bound = ckpt.action_bound();
  Vector action = ckpt.act(online.observation);
  const double sigma = ckpt.hyper.exploration_noise * bound;
  for (Eigen::Index i = 0; i < action.size(); ++i) action[i] += sigma * online.exploration.normal();
  action = action.cwiseMax(ckpt.action_low).cwiseMin(ckpt.action_high);
  auto step = online.env->step(action);
  ++online.env_steps;
  // Time-limit truncation is not a terminal state: done stays false.
  data::Transition t{online.observation, action, step.reward, step.observation, false};
  if (step.done) {
    ++online.episodes_finished;
    online.observation = online.env->reset(online.episode_seeds.next_u64());
  } else {
    online.observation = std::move(step.observation);
  }
  return t;
}

data::ReplayBuffer warm_start_buffer(const AgentCheckpoint& ckpt, OnlineEnv& online, std::size_t steps,
                                     std::size_t capacity) {
  require(steps <= capacity, ErrorKind::usage,
          "warm start of " + std::to_string(steps) + " steps exceeds buffer capacity " + std::to_string(capacity));
  const auto& spec = online.env->spec();
  data::ReplayBuffer buffer(spec.obs_dim, spec.act_dim, capacity);
  for (std::size_t i = 0; i < steps; ++i) buffer.add(interact(ckpt, online));
  return buffer;
}

StepMetrics online_train_step(AgentCheckpoint& ckpt, OnlineEnv& online, data::ReplayBuffer& buffer,
                              std::uint64_t iteration) {
  require(ckpt.phase == Phase::online, ErrorKind::usage, "online_train_step needs an online-phase checkpoint");
  buffer.add(interact(ckpt, online));
  return as_training_error(iteration, "online", [&] {
    StepMetrics m;
    Batch batch = data::sample_batch(buffer, ckpt.hyper.batch_size, online.agent);
    batch.states = ckpt.norm_stats.normalize(batch.states);
    batch.next_states = ckpt.norm_stats.normalize(batch.next_states);
    const Vector y = compute_td_target(ckpt, batch, online.agent);
    update_critics(ckpt, batch, y, m);
    if (iteration % ckpt.hyper.policy_delay == 0) update_actor_and_targets(ckpt, batch, false, m);
    ckpt.iteration = iteration;
    ckpt.env_steps = online.env_steps;
    return m;
  });
}

}  // namespace wmrl::agents
