#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "wmrl/envs/env.hpp"

namespace wmrl::envs {

/// Maps an observation to an action. The rng is the rollout's action stream;
/// deterministic policies ignore it.
using Policy = std::function<Vector(const Vector& observation, Rng& rng)>;

Policy uniform_random_policy(const EnvSpec& spec);

/// Anchors of the normalized score.
struct ReferenceScores {
  std::string env_name;
  double random_ref = 0.0;
  double expert_ref = 0.0;
  std::uint64_t episodes_used = 0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ReferenceScores&) const = default;
};

struct EpisodeStats {
  double mean_return = 0.0;
  double std_return = 0.0;  // population std over episodes
  std::vector<double> returns;
};

/// Runs `episodes` full episodes. Episode i resets from a seed derived from
/// `seed`; the action rng is derived from `seed` as well, so two policies
/// evaluated with the same seed see the same initial states and draws.
EpisodeStats rollout_returns(const std::string& env_name, const Policy& policy, std::size_t episodes,
                             std::uint64_t seed);

/// Random anchor from uniform actions, expert anchor from `expert`. Throws a
/// calibration error when the expert does not beat random.
ReferenceScores calibrate_references(const std::string& env_name, const Policy& expert, std::size_t episodes,
                                     std::uint64_t seed);

void save_references(const ReferenceScores& refs, const std::filesystem::path& path);
ReferenceScores load_references(const std::filesystem::path& path);

}  // namespace wmrl::envs
