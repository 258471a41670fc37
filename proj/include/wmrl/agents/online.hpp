#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "wmrl/agents/td3.hpp"

namespace wmrl::agents {

/// Fresh actor/critics for `seed`. Every fully online run starts from this.
AgentCheckpoint fresh_agent(const std::string& env_name, const Hyperparams& hyper, data::NormStats norm_stats,
                            std::uint64_t seed);

struct OnlineLoopConfig {
  std::uint64_t seed = 0;
  std::size_t iterations = 100000;
  std::size_t warm_start_steps = 5000;
  std::size_t buffer_capacity = 1000000;
};

struct OnlineLoopHooks {
  // Every stored transition, in insertion order (warm start included).
  std::function<void(const data::Transition&)> on_transition;
  // Called after each iteration; returning false stops the loop.
  std::function<bool(const AgentCheckpoint&)> after_iteration;
};

/// Warm start followed by TD3 iterations. Switches the checkpoint to the
/// online phase and stamps the run provenance. Returns the iterations done.
std::size_t run_online_loop(AgentCheckpoint& ckpt, const OnlineLoopConfig& config, const OnlineLoopHooks& hooks = {});

}  // namespace wmrl::agents
