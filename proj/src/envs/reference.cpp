#include "wmrl/envs/reference.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/core/text.hpp"

namespace wmrl::envs {

Policy uniform_random_policy(const EnvSpec& spec) {
  return [low = spec.action_low, high = spec.action_high](const Vector&, Rng& rng) {
    Vector a(low.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(low[i], high[i]);
    return a;
  };
}

void ReferenceScores::validate() const {
  require(episodes_used >= 1, ErrorKind::config, "reference scores need episodes_used >= 1");
  require(std::isfinite(random_ref) && std::isfinite(expert_ref), ErrorKind::config,
          "reference scores must be finite");
  require(expert_ref > random_ref, ErrorKind::config,
          "expert_ref (" + format_double(expert_ref) + ") must exceed random_ref (" + format_double(random_ref) + ")");
}

EpisodeStats rollout_returns(const std::string& env_name, const Policy& policy, std::size_t episodes,
                             std::uint64_t seed) {
  require(episodes >= 1, ErrorKind::usage, "need at least one episode");
  auto env = make_env(env_name);
  Rng episode_seeds(derive_seed(seed, "episodes"));
  Rng action_rng(derive_seed(seed, "actions"));
  EpisodeStats stats;
  for (std::size_t e = 0; e < episodes; ++e) {
    Vector obs = env->reset(episode_seeds.next_u64());
    double total = 0.0;
    for (;;) {
      auto r = env->step(policy(obs, action_rng));
      total += r.reward;
      obs = std::move(r.observation);
      if (r.done) break;
    }
    stats.returns.push_back(total);
  }
  double sum = 0.0;
  for (double r : stats.returns) sum += r;
  stats.mean_return = sum / static_cast<double>(episodes);
  double sq = 0.0;
  for (double r : stats.returns) sq += (r - stats.mean_return) * (r - stats.mean_return);
  stats.std_return = std::sqrt(sq / static_cast<double>(episodes));
  return stats;
}

ReferenceScores calibrate_references(const std::string& env_name, const Policy& expert, std::size_t episodes,
                                     std::uint64_t seed) {
  require(episodes >= 1, ErrorKind::usage, "calibration needs episodes >= 1");
  const auto spec = env_spec(env_name);
  ReferenceScores refs;
  refs.env_name = env_name;
  refs.episodes_used = episodes;
  refs.seed = seed;
  refs.random_ref = rollout_returns(env_name, uniform_random_policy(spec), episodes, seed).mean_return;
  refs.expert_ref = rollout_returns(env_name, expert, episodes, seed).mean_return;
  if (!(refs.expert_ref > refs.random_ref)) {
    throw_error(ErrorKind::calibration, "expert policy (mean return " + format_double(refs.expert_ref) +
                                            ") does not beat the random policy (" + format_double(refs.random_ref) +
                                            ") on " + env_name);
  }
  return refs;
}

void save_references(const ReferenceScores& refs, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "env=" << refs.env_name << "\n"
     << "random_ref=" << format_double(refs.random_ref) << "\n"
     << "expert_ref=" << format_double(refs.expert_ref) << "\n"
     << "episodes=" << refs.episodes_used << "\n"
     << "seed=" << refs.seed << "\n";
  write_file(path, os.str());
}

ReferenceScores load_references(const std::filesystem::path& path) {
  const auto kv = parse_key_values(read_file(path), path.string());
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw_error(ErrorKind::format, path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  for (const auto& [key, value] : kv) {
    if (key != "env" && key != "random_ref" && key != "expert_ref" && key != "episodes" && key != "seed") {
      throw_error(ErrorKind::format, path.string() + ": unknown key '" + key + "'");
    }
  }
  ReferenceScores refs;
  refs.env_name = get("env");
  refs.random_ref = parse_double(get("random_ref"), "random_ref");
  refs.expert_ref = parse_double(get("expert_ref"), "expert_ref");
  refs.episodes_used = parse_u64(get("episodes"), "episodes");
  refs.seed = parse_u64(get("seed"), "seed");
  refs.validate();
  return refs;
}

}  // namespace wmrl::envs
