#include "wmrl/data/generate.hpp"

#include <algorithm>

#include "wmrl/agents/online.hpp"
#include "wmrl/core/error.hpp"

namespace wmrl::data {
namespace {

void check_checkpoint(const agents::AgentCheckpoint* ckpt, const char* which, Flavor flavor,
                      const std::string& env_name) {
  require(ckpt != nullptr, ErrorKind::config,
          "flavor " + to_string(flavor) + " needs a " + which + " checkpoint");
  require(ckpt->env_name == env_name, ErrorKind::config,
          std::string(which) + " checkpoint was trained on " + ckpt->env_name + ", not " + env_name);
}

void collect_random(const std::string& env_name, std::size_t count, std::uint64_t seed, TransitionColumns& out) {
  auto env = envs::make_env(env_name);
  const auto policy = envs::uniform_random_policy(env->spec());
  Rng episodes(derive_seed(seed, "episodes"));
  Rng actions(derive_seed(seed, "actions"));
  Vector obs = env->reset(episodes.next_u64());
  for (std::size_t i = 0; i < count; ++i) {
    Vector a = policy(obs, actions);
    auto step = env->step(a);
    out.push_back({obs, a, step.reward, step.observation, false});
    obs = step.done ? env->reset(episodes.next_u64()) : std::move(step.observation);
  }
}

}  // namespace

void collect_rollouts(const agents::AgentCheckpoint& ckpt, const std::string& env_name, std::size_t count,
                      std::uint64_t seed, TransitionColumns& out) {
  auto env = envs::make_env(env_name);
  Rng episodes(derive_seed(seed, "episodes"));
  Rng noise(derive_seed(seed, "noise"));
  const double sigma = ckpt.hyper.exploration_noise * ckpt.action_bound();
  Vector obs = env->reset(episodes.next_u64());
  for (std::size_t i = 0; i < count; ++i) {
    Vector a = ckpt.act(obs);
    for (Eigen::Index j = 0; j < a.size(); ++j) a[j] += sigma * noise.normal();
    a = a.cwiseMax(ckpt.action_low).cwiseMin(ckpt.action_high);
    auto step = env->step(a);
    out.push_back({obs, a, step.reward, step.observation, false});
    obs = step.done ? env->reset(episodes.next_u64()) : std::move(step.observation);
  }
}

TransitionColumns replay_training_stream(const agents::AgentCheckpoint& medium, std::size_t count) {
  require(medium.phase == agents::Phase::online && medium.iteration > 0, ErrorKind::config,
          "medium checkpoint does not come from an online training run");
  const auto spec = envs::env_spec(medium.env_name);
  TransitionColumns stream(spec.obs_dim, spec.act_dim);
  stream.reserve(count);

  agents::OnlineLoopConfig cfg;
  cfg.seed = medium.run_seed;
  cfg.warm_start_steps = medium.warm_start_steps;
  cfg.buffer_capacity = medium.buffer_capacity;
  const std::size_t after_warm = count > cfg.warm_start_steps ? count - cfg.warm_start_steps : 0;
  cfg.iterations = std::max<std::size_t>(medium.iteration, after_warm);

  auto ckpt = agents::fresh_agent(medium.env_name, medium.hyper, medium.norm_stats, medium.run_seed);
  bool verified = false;
  agents::OnlineLoopHooks hooks;
  hooks.on_transition = [&](const Transition& t) {
    if (stream.size() < count) stream.push_back(t);
  };
  hooks.after_iteration = [&](const agents::AgentCheckpoint& c) {
    if (c.iteration == medium.iteration) {
      if (!c.same_parameters(medium)) {
        throw_error(ErrorKind::config, "replaying run seed " + std::to_string(medium.run_seed) +
                                           " does not reproduce the medium checkpoint at iteration " +
                                           std::to_string(medium.iteration));
      }
      verified = true;
    }
    return !(verified && stream.size() >= count);
  };
  agents::run_online_loop(ckpt, cfg, hooks);
  require(verified, ErrorKind::config, "medium checkpoint iteration was never reached while replaying");
  return stream;
}

OfflineDataset generate_dataset(const std::string& env_name, Flavor flavor, std::size_t size, std::uint64_t seed,
                                const agents::AgentCheckpoint* medium, const agents::AgentCheckpoint* expert) {
  const auto spec = envs::env_spec(env_name);
  require(size > 0, ErrorKind::usage, "dataset size must be positive");
  OfflineDataset ds{env_name, flavor, seed, TransitionColumns(spec.obs_dim, spec.act_dim)};
  ds.transitions.reserve(size);
  switch (flavor) {
    case Flavor::random:
      collect_random(env_name, size, seed, ds.transitions);
      break;
    case Flavor::medium:
      check_checkpoint(medium, "medium", flavor, env_name);
      collect_rollouts(*medium, env_name, size, derive_seed(seed, "medium"), ds.transitions);
      break;
    case Flavor::medium_replay:
      check_checkpoint(medium, "medium", flavor, env_name);
      ds.transitions = replay_training_stream(*medium, size);
      break;
    case Flavor::medium_expert: {
      check_checkpoint(medium, "medium", flavor, env_name);
      check_checkpoint(expert, "expert", flavor, env_name);
      const std::size_t n_medium = size - size / 2;
      collect_rollouts(*medium, env_name, n_medium, derive_seed(seed, "medium"), ds.transitions);
      collect_rollouts(*expert, env_name, size / 2, derive_seed(seed, "expert"), ds.transitions);
      break;
    }
    case Flavor::imported:
      throw_error(ErrorKind::config, "imported datasets cannot be generated");
  }
  ds.transitions.quantize_to_f32();
  return ds;
}

}  // namespace wmrl::data
