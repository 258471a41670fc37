#include "wmrl/agents/online.hpp"

#include "wmrl/core/error.hpp"

namespace wmrl::agents {

AgentCheckpoint fresh_agent(const std::string& env_name, const Hyperparams& hyper, data::NormStats norm_stats,
                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  auto ckpt = AgentCheckpoint::create(envs::env_spec(env_name), hyper, std::move(norm_stats), rng);
  ckpt.run_seed = seed;
  return ckpt;
}

std::size_t run_online_loop(AgentCheckpoint& ckpt, const OnlineLoopConfig& config, const OnlineLoopHooks& hooks) {
  ckpt.phase = Phase::online;
  ckpt.run_seed = config.seed;
  ckpt.iteration = 0;
  ckpt.env_steps = 0;
  ckpt.warm_start_steps = config.warm_start_steps;
  ckpt.buffer_capacity = config.buffer_capacity;

  auto online = OnlineEnv::make(ckpt.env_name, config.seed);
  auto buffer = warm_start_buffer(ckpt, online, config.warm_start_steps, config.buffer_capacity);
  if (hooks.on_transition) {
    for (std::size_t i = 0; i < buffer.size(); ++i) hooks.on_transition(buffer.at(i));
  }
  ckpt.env_steps = online.env_steps;

  std::size_t done = 0;
  for (std::uint64_t it = 1; it <= config.iterations; ++it) {
    online_train_step(ckpt, online, buffer, it);
    ++done;
    if (hooks.on_transition) hooks.on_transition(buffer.at(buffer.size() - 1));
    if (hooks.after_iteration && !hooks.after_iteration(ckpt)) break;
  }
  return done;
}

}  // namespace wmrl::agents
