#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "wmrl/agents/td3.hpp"
#include "wmrl/data/dataset.hpp"

namespace wmrl::data {

/// Builds a dataset of one flavor. medium and medium_replay need `medium`,
/// medium_expert needs both checkpoints. Values are stored at f32 precision.
OfflineDataset generate_dataset(const std::string& env_name, Flavor flavor, std::size_t size, std::uint64_t seed,
                                const agents::AgentCheckpoint* medium = nullptr,
                                const agents::AgentCheckpoint* expert = nullptr);

/// `count` transitions of the checkpoint's actor with its exploration noise.
void collect_rollouts(const agents::AgentCheckpoint& ckpt, const std::string& env_name, std::size_t count,
                      std::uint64_t seed, TransitionColumns& out);

/// First `count` transitions stored by the fully online run that produced
/// `medium`, obtained by replaying that run. Throws when the replayed run
/// does not reproduce the checkpoint.
TransitionColumns replay_training_stream(const agents::AgentCheckpoint& medium, std::size_t count);

}  // namespace wmrl::data
