#include "wmrl/pipeline/config.hpp"

#include <functional>
#include <map>

#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/core/text.hpp"
#include "wmrl/envs/env.hpp"

namespace wmrl::pipeline {
namespace {

using Cfg = ExperimentConfig;

struct Field {
  std::function<void(Cfg&, const std::string&)> set;
  std::function<std::string(const Cfg&)> get;
};

Field str_field(std::string Cfg::*member) {
  return {[member](Cfg& c, const std::string& v) { c.*member = v; },
          [member](const Cfg& c) { return c.*member; }};
}

template <class Proj>
Field size_field(const std::string& key, Proj proj) {
  return {[key, proj](Cfg& c, const std::string& v) { proj(c) = parse_u64(v, key); },
          [proj](const Cfg& c) { return std::to_string(proj(const_cast<Cfg&>(c))); }};
}

template <class Proj>
Field double_field(const std::string& key, Proj proj) {
  return {[key, proj](Cfg& c, const std::string& v) { proj(c) = parse_double(v, key); },
          [proj](const Cfg& c) { return format_double(proj(const_cast<Cfg&>(c))); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto sz = [&t](const std::string& k, auto proj) { t.emplace_back(k, size_field(k, proj)); };
    auto dbl = [&t](const std::string& k, auto proj) { t.emplace_back(k, double_field(k, proj)); };

    t.emplace_back("env", str_field(&Cfg::env));
    t.emplace_back("dataset", str_field(&Cfg::dataset));
    t.emplace_back("refs", str_field(&Cfg::refs));
    t.emplace_back("output_dir", str_field(&Cfg::output_dir));
    t.emplace_back("seed", Field{[](Cfg& c, const std::string& v) { c.seed = parse_u64(v, "seed"); },
                                 [](const Cfg& c) { return std::to_string(c.seed); }});
    sz("offline_iterations", [](Cfg& c) -> std::size_t& { return c.offline_iterations; });
    sz("online_iterations", [](Cfg& c) -> std::size_t& { return c.online_iterations; });
    sz("eval_every", [](Cfg& c) -> std::size_t& { return c.eval_every; });
    sz("eval_episodes", [](Cfg& c) -> std::size_t& { return c.eval_episodes; });
    t.emplace_back("init_mode", Field{[](Cfg& c, const std::string& v) { c.init_mode = parse_init_mode(v); },
                                      [](const Cfg& c) { return to_string(c.init_mode); }});
    t.emplace_back("augment", Field{[](Cfg& c, const std::string& v) { c.augment = parse_bool(v, "augment"); },
                                    [](const Cfg& c) { return std::string(c.augment ? "true" : "false"); }});
    dbl("augment_fraction", [](Cfg& c) -> double& { return c.hyper.augment_fraction; });
    sz("warm_start_steps", [](Cfg& c) -> std::size_t& { return c.warm_start_steps; });
    sz("buffer_capacity", [](Cfg& c) -> std::size_t& { return c.buffer_capacity; });
    dbl("norm_epsilon", [](Cfg& c) -> double& { return c.norm_epsilon; });
    t.emplace_back("stop_score",
                   Field{[](Cfg& c, const std::string& v) {
                           if (trim(v) == "none" || trim(v).empty()) {
                             c.stop_score.reset();
                           } else {
                             c.stop_score = parse_double(v, "stop_score");
                           }
                         },
                         [](const Cfg& c) { return c.stop_score ? format_double(*c.stop_score) : "none"; }});
    t.emplace_back("offline_checkpoint", str_field(&Cfg::offline_checkpoint));
    t.emplace_back("wm_checkpoint", str_field(&Cfg::wm_checkpoint));
    t.emplace_back("expert_checkpoint", str_field(&Cfg::expert_checkpoint));

    sz("wm_latent_dim", [](Cfg& c) -> std::size_t& { return c.wm.latent_dim; });
    sz("wm_hidden", [](Cfg& c) -> std::size_t& { return c.wm.hidden; });
    sz("wm_hidden_layers", [](Cfg& c) -> std::size_t& { return c.wm.hidden_layers; });
    sz("wm_iterations", [](Cfg& c) -> std::size_t& { return c.wm_iterations; });
    sz("wm_batch_size", [](Cfg& c) -> std::size_t& { return c.wm_batch_size; });
    dbl("wm_learning_rate", [](Cfg& c) -> double& { return c.wm_learning_rate; });
    t.emplace_back("wm_kl_direction",
                   Field{[](Cfg& c, const std::string& v) {
                           if (v == "posterior_to_prior") {
                             c.wm.kl_direction = wm::KlDirection::posterior_to_prior;
                           } else if (v == "prior_to_posterior") {
                             c.wm.kl_direction = wm::KlDirection::prior_to_posterior;
                           } else {
                             throw_error(ErrorKind::config, "wm_kl_direction: '" + v +
                                                                "' is not posterior_to_prior or prior_to_posterior");
                           }
                         },
                         [](const Cfg& c) {
                           return std::string(c.wm.kl_direction == wm::KlDirection::posterior_to_prior
                                                  ? "posterior_to_prior"
                                                  : "prior_to_posterior");
                         }});
    dbl("wm_weight_recon", [](Cfg& c) -> double& { return c.wm.weights.recon; });
    dbl("wm_weight_kl", [](Cfg& c) -> double& { return c.wm.weights.kl; });
    dbl("wm_weight_state", [](Cfg& c) -> double& { return c.wm.weights.state; });
    dbl("wm_weight_latent", [](Cfg& c) -> double& { return c.wm.weights.latent; });

    dbl("discount", [](Cfg& c) -> double& { return c.hyper.discount; });
    dbl("tau", [](Cfg& c) -> double& { return c.hyper.tau; });
    dbl("policy_noise", [](Cfg& c) -> double& { return c.hyper.policy_noise; });
    dbl("noise_clip", [](Cfg& c) -> double& { return c.hyper.noise_clip; });
    sz("policy_delay", [](Cfg& c) -> std::size_t& { return c.hyper.policy_delay; });
    dbl("exploration_noise", [](Cfg& c) -> double& { return c.hyper.exploration_noise; });
    sz("batch_size", [](Cfg& c) -> std::size_t& { return c.hyper.batch_size; });
    dbl("bc_weight", [](Cfg& c) -> double& { return c.hyper.bc_weight; });
    dbl("actor_lr", [](Cfg& c) -> double& { return c.hyper.actor_lr; });
    dbl("critic_lr", [](Cfg& c) -> double& { return c.hyper.critic_lr; });
    sz("hidden", [](Cfg& c) -> std::size_t& { return c.hyper.hidden; });
    sz("hidden_layers", [](Cfg& c) -> std::size_t& { return c.hyper.hidden_layers; });
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw_error(ErrorKind::config, "unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(InitMode mode) {
  switch (mode) {
    case InitMode::both: return "both";
    case InitMode::actor_only: return "actor_only";
    case InitMode::critic_only: return "critic_only";
    case InitMode::none: return "none";
  }
  return "?";
}

InitMode parse_init_mode(std::string_view name) {
  std::string n(trim(name));
  for (auto& ch : n) {
    if (ch == '-') ch = '_';
  }
  if (n == "both") return InitMode::both;
  if (n == "actor_only") return InitMode::actor_only;
  if (n == "critic_only") return InitMode::critic_only;
  if (n == "none") return InitMode::none;
  throw_error(ErrorKind::config, "init_mode: '" + std::string(name) + "' is not one of both, actor_only, "
                                                                      "critic_only, none");
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, f] : fields()) out.push_back(key);
    return out;
  }();
  return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, value); }

std::string ExperimentConfig::get(const std::string& key) const { return field(key).get(*this); }

void ExperimentConfig::validate() const {
  (void)envs::env_spec(env);
  hyper.validate();
  require(eval_every >= 1, ErrorKind::config, "eval_every must be >= 1");
  require(eval_episodes >= 1, ErrorKind::config, "eval_episodes must be >= 1");
  require(norm_epsilon > 0.0, ErrorKind::config, "norm_epsilon must be positive");
  require(warm_start_steps <= buffer_capacity, ErrorKind::config, "warm_start_steps exceeds buffer_capacity");
  require(buffer_capacity >= 1, ErrorKind::config, "buffer_capacity must be >= 1");
  require(!refs.empty(), ErrorKind::config, "refs path is required");
  require(!output_dir.empty(), ErrorKind::config, "output_dir is required");
  require(wm.hidden >= 1 && wm_batch_size >= 1, ErrorKind::config, "world-model sizes must be >= 1");
  require(wm_learning_rate > 0.0, ErrorKind::config, "wm_learning_rate must be positive");
  require(wm.weights.recon >= 0 && wm.weights.kl >= 0 && wm.weights.state >= 0 && wm.weights.latent >= 0,
          ErrorKind::config, "world-model loss weights must be non-negative");

  const bool needs_offline = init_mode != InitMode::none || augment || offline_iterations > 0;
  if (needs_offline && offline_checkpoint.empty()) {
    require(!dataset.empty(), ErrorKind::config,
            "a dataset is required unless init_mode=none, augment=false and offline_iterations=0");
  }
  if (augment && offline_checkpoint.empty() && wm_checkpoint.empty()) {
    require(!dataset.empty(), ErrorKind::config, "augment=true needs a dataset to train the world model");
  }
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + "=" + f.get(*this) + "\n";
  return out;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, const std::string& context) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : parse_key_values(text, context)) {
    cfg.set(key, value);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

}  // namespace wmrl::pipeline
