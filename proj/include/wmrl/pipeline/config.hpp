#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wmrl/agents/td3.hpp"
#include "wmrl/worldmodel/world_model.hpp"

namespace wmrl::pipeline {

enum class InitMode { both, actor_only, critic_only, none };

std::string to_string(InitMode mode);
InitMode parse_init_mode(std::string_view name);

struct ExperimentConfig {
  std::string env = "pendulum";
  std::string dataset;
  std::string refs;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  std::size_t offline_iterations = 50000;
  std::size_t online_iterations = 100000;
  std::size_t eval_every = 5000;
  std::size_t eval_episodes = 10;
  InitMode init_mode = InitMode::both;
  bool augment = true;
  std::size_t warm_start_steps = 5000;
  std::size_t buffer_capacity = 1000000;
  double norm_epsilon = 1e-3;
  // Stop the online phase at the first evaluation reaching this score.
  std::optional<double> stop_score;

  // Reuse artifacts instead of training them.
  std::string offline_checkpoint;
  std::string wm_checkpoint;
  // Expert whose episode feeds the critic analysis (optional).
  std::string expert_checkpoint;

  wm::WorldModelConfig wm;
  std::size_t wm_iterations = 10000;
  std::size_t wm_batch_size = 256;
  double wm_learning_rate = 3e-4;

  agents::Hyperparams hyper;

  /// All keys accepted in config files, in echo order.
  static const std::vector<std::string>& keys();
  /// Config error on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  void validate() const;
  /// Fully resolved key=value text.
  std::string to_text() const;

  static ExperimentConfig parse(std::string_view text, const std::string& context);
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace wmrl::pipeline
