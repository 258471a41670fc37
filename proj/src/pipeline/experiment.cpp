#include "wmrl/pipeline/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wmrl/agents/online.hpp"
#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/core/text.hpp"

namespace wmrl::pipeline {
namespace {

bool eval_due(std::uint64_t iteration, std::size_t every, std::size_t total) {
  return iteration % every == 0 || iteration == total;
}

wm::WorldModel obtain_world_model(const ExperimentConfig& cfg, const data::OfflineDataset& dataset,
                                  const data::NormStats& norm, std::vector<wm::WmCurvePoint>& curve) {
  if (!cfg.wm_checkpoint.empty()) {
    auto model = wm::WorldModel::load(cfg.wm_checkpoint);
    require(model.obs_dim == dataset.obs_dim() && model.act_dim == dataset.act_dim(), ErrorKind::config,
            cfg.wm_checkpoint + ": world model dimensions do not match the dataset");
    require(model.trained_on_normalized && model.norm_stats == norm, ErrorKind::config,
            cfg.wm_checkpoint + ": world model was trained with different normalization statistics");
    return model;
  }
  Rng init(derive_seed(cfg.seed, "wm"));
  auto model = wm::WorldModel::create(dataset.obs_dim(), dataset.act_dim(), cfg.wm, init);
  wm::WmTrainConfig tc;
  tc.iterations = cfg.wm_iterations;
  tc.batch_size = cfg.wm_batch_size;
  tc.seed = derive_seed(cfg.seed, "wm-train");
  tc.adam.learning_rate = cfg.wm_learning_rate;
  curve = wm::train_world_model(model, dataset, norm, tc);
  return model;
}

std::string wm_curve_csv(const std::vector<wm::WmCurvePoint>& curve) {
  std::string out = "iter,total,recon_elbo,kl,state_recon,latent_recon\n";
  for (const auto& p : curve) {
    out += std::to_string(p.iteration) + "," + format_double(p.loss.total) + "," +
           format_double(p.loss.recon_elbo) + "," + format_double(p.loss.kl) + "," +
           format_double(p.loss.state_recon) + "," + format_double(p.loss.latent_recon) + "\n";
  }
  return out;
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& bytes) {
    write_file(dir_ / name, bytes);
    entries_.push_back("artifact=" + name + " sha256=" + sha256_hex(bytes) + " bytes=" + std::to_string(bytes.size()));
  }

  std::filesystem::path finish(const std::string& header) {
    std::string text = "# wmrl experiment manifest\n" + header;
    for (const auto& e : entries_) text += e + "\n";
    const auto path = dir_ / "manifest.txt";
    write_file(path, text);
    return path;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> entries_;
};

}  // namespace

OfflineResult run_offline_phase(const ExperimentConfig& cfg, const data::OfflineDataset& dataset,
                                const envs::ReferenceScores& refs, const EvalHook& on_eval) {
  require(dataset.env_name == cfg.env, ErrorKind::config,
          "dataset was generated on " + dataset.env_name + ", config names " + cfg.env);
  require(dataset.size() > 0, ErrorKind::config, "offline dataset is empty");
  auto norm = data::compute_norm_stats(dataset, cfg.norm_epsilon);

  OfflineResult result{agents::fresh_agent(cfg.env, cfg.hyper, norm, cfg.seed), {}, std::nullopt, {}};
  auto& ckpt = result.checkpoint;
  if (cfg.augment) result.world_model = obtain_world_model(cfg, dataset, norm, result.wm_curve);
  const wm::WorldModel* model = result.world_model ? &*result.world_model : nullptr;

  const auto data = agents::NormalizedDataset::make(dataset, norm);
  auto rngs = agents::OfflineRngs::from_seed(derive_seed(cfg.seed, "offline"));
  const auto eval_seed = derive_seed(cfg.seed, "eval");
  for (std::uint64_t it = 1; it <= cfg.offline_iterations; ++it) {
    agents::offline_train_step(ckpt, data, model, it, rngs);
    if (eval_due(it, cfg.eval_every, cfg.offline_iterations)) {
      result.curve.push_back(evaluate_policy(ckpt, cfg.env, cfg.eval_episodes, eval_seed, refs));
      if (on_eval) on_eval(result.curve.back());
    }
  }
  return result;
}

std::size_t eval_count(std::size_t total, std::size_t every) {
  require(every >= 1, ErrorKind::config, "eval_every must be >= 1");
  return total / every + (total % every != 0 ? 1 : 0);
}

agents::AgentCheckpoint initialize_online(const ExperimentConfig& cfg, const agents::AgentCheckpoint* offline,
                                          const data::NormStats& norm_stats) {
  require(offline != nullptr || cfg.init_mode == InitMode::none, ErrorKind::config,
          "init_mode=" + to_string(cfg.init_mode) + " needs an offline checkpoint");
  if (offline != nullptr) {
    require(offline->env_name == cfg.env, ErrorKind::config, "offline checkpoint is for " + offline->env_name);
  }
  const auto& norm = offline ? offline->norm_stats : norm_stats;
  auto ckpt = agents::fresh_agent(cfg.env, cfg.hyper, norm, cfg.seed);
  switch (cfg.init_mode) {
    case InitMode::both:
      ckpt = *offline;
      ckpt.hyper = cfg.hyper;
      break;
    case InitMode::actor_only:
      ckpt.actor = offline->actor;
      break;
    case InitMode::critic_only:
      ckpt.critic1 = offline->critic1;
      ckpt.critic2 = offline->critic2;
      break;
    case InitMode::none:
      break;
  }
  if (cfg.init_mode != InitMode::none) {
    ckpt.sync_targets();
    ckpt.actor.reset_adam_state();
    ckpt.critic1.reset_adam_state();
    ckpt.critic2.reset_adam_state();
  }
  return ckpt;
}

OnlineResult run_online_phase(const ExperimentConfig& cfg, const agents::AgentCheckpoint* offline,
                              const data::NormStats& norm_stats, const envs::ReferenceScores& refs,
                              const EvalHook& on_eval) {
  OnlineResult result{initialize_online(cfg, offline, norm_stats), {}, 0};
  auto& ckpt = result.checkpoint;

  agents::OnlineLoopConfig loop{cfg.seed, cfg.online_iterations, cfg.warm_start_steps, cfg.buffer_capacity};
  const auto eval_seed = derive_seed(cfg.seed, "eval");
  agents::OnlineLoopHooks hooks;
  hooks.after_iteration = [&](const agents::AgentCheckpoint& c) {
    if (!eval_due(c.iteration, cfg.eval_every, cfg.online_iterations)) return true;
    result.curve.push_back(evaluate_policy(c, cfg.env, cfg.eval_episodes, eval_seed, refs));
    if (on_eval) on_eval(result.curve.back());
    return !(cfg.stop_score && result.curve.back().normalized_score >= *cfg.stop_score);
  };
  result.iterations = agents::run_online_loop(ckpt, loop, hooks);
  return result;
}

Episode record_episode(const agents::AgentCheckpoint& policy, std::uint64_t seed) {
  auto env = envs::make_env(policy.env_name);
  const auto& spec = env->spec();
  Episode ep{policy.env_name, Matrix(spec.max_episode_steps, spec.obs_dim),
             Matrix(spec.max_episode_steps, spec.act_dim), Vector(spec.max_episode_steps)};
  Vector obs = env->reset(derive_seed(seed, "episode"));
  std::size_t n = 0;
  for (bool done = false; !done; ++n) {
    const Vector a = policy.act(obs);
    auto step = env->step(a);
    ep.states.row(n) = obs.transpose();
    ep.actions.row(n) = a.transpose();
    ep.rewards[n] = step.reward;
    obs = std::move(step.observation);
    done = step.done;
  }
  ep.states.conservativeResize(n, Eigen::NoChange);
  ep.actions.conservativeResize(n, Eigen::NoChange);
  ep.rewards.conservativeResize(n);
  return ep;
}

CriticAnalysis analyze_critic(const agents::AgentCheckpoint& ckpt, const Episode& episode) {
  require(episode.env_name == ckpt.env_name, ErrorKind::usage,
          "episode from " + episode.env_name + " analyzed with a " + ckpt.env_name + " critic");
  require(static_cast<std::size_t>(episode.states.cols()) == ckpt.norm_stats.dim() &&
              static_cast<std::size_t>(episode.actions.cols()) == ckpt.actor.output_dim() &&
              episode.actions.rows() == episode.states.rows(),
          ErrorKind::usage, "episode dimensions do not match the checkpoint");
  const auto spec = envs::env_spec(ckpt.env_name);
  CriticAnalysis out;
  out.bound_low = spec.reward_min / (1.0 - ckpt.hyper.discount);
  out.bound_high = spec.reward_max / (1.0 - ckpt.hyper.discount);
  if (episode.size() == 0) return out;

  const Matrix input = agents::concat_cols(ckpt.norm_stats.normalize(episode.states), episode.actions);
  const Matrix q1 = ckpt.critic1.predict(input);
  const Matrix q2 = ckpt.critic2.predict(input);
  out.min = q1(0, 0);
  out.max = q1(0, 0);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < q1.rows(); ++i) {
    out.q1.push_back(q1(i, 0));
    out.q2.push_back(q2(i, 0));
    out.min = std::min(out.min, q1(i, 0));
    out.max = std::max(out.max, q1(i, 0));
    sum += q1(i, 0);
    const auto inside = [&](double q) { return q >= out.bound_low && q <= out.bound_high; };
    if (!inside(q1(i, 0)) || !inside(q2(i, 0))) ++out.outside;
  }
  out.mean = sum / static_cast<double>(q1.rows());
  return out;
}

std::string critic_csv(const CriticAnalysis& a) {
  std::string out = "step,q1,q2,bound_low,bound_high\n";
  const auto low = format_double(a.bound_low);
  const auto high = format_double(a.bound_high);
  for (std::size_t i = 0; i < a.q1.size(); ++i) {
    out += std::to_string(i) + "," + format_double(a.q1[i]) + "," + format_double(a.q2[i]) + "," + low + "," +
           high + "\n";
  }
  return out;
}

std::string critic_summary(const CriticAnalysis& a) {
  std::ostringstream os;
  os << "steps=" << a.q1.size() << "\n"
     << "q1_min=" << format_double(a.min) << "\n"
     << "q1_max=" << format_double(a.max) << "\n"
     << "q1_mean=" << format_double(a.mean) << "\n"
     << "bound_low=" << format_double(a.bound_low) << "\n"
     << "bound_high=" << format_double(a.bound_high) << "\n"
     << "outside_band=" << a.outside << "\n"
     << "flagged=" << (a.outside > 0 ? "true" : "false") << "\n";
  return os.str();
}

CalibrationResult calibrate_with_online_expert(const CalibrationConfig& cfg) {
  require(cfg.episodes >= 1, ErrorKind::config, "calibration needs at least one episode");
  require(cfg.eval_every >= 1 && cfg.eval_episodes >= 1, ErrorKind::config, "eval settings must be >= 1");
  const auto spec = envs::env_spec(cfg.env);
  const auto run_seed = derive_seed(cfg.seed, "expert");
  auto ckpt = agents::fresh_agent(cfg.env, cfg.hyper, data::NormStats::identity(spec.obs_dim), run_seed);

  struct Snapshot {
    agents::AgentCheckpoint ckpt;
    EvalRecord record;
  };
  std::vector<Snapshot> snapshots;
  const auto eval_seed = derive_seed(run_seed, "eval");
  agents::OnlineLoopHooks hooks;
  hooks.after_iteration = [&](const agents::AgentCheckpoint& c) {
    if (eval_due(c.iteration, cfg.eval_every, cfg.train_iterations)) {
      const auto stats = envs::rollout_returns(cfg.env, c.policy(), cfg.eval_episodes, eval_seed);
      EvalRecord r{c.phase, c.iteration, c.env_steps, stats.mean_return, stats.std_return, 0.0};
      snapshots.push_back({c, r});
    }
    return true;
  };
  agents::run_online_loop(ckpt, {run_seed, cfg.train_iterations, cfg.warm_start_steps, cfg.buffer_capacity},
                          hooks);

  CalibrationResult result{envs::calibrate_references(cfg.env, ckpt.policy(), cfg.episodes, cfg.seed), ckpt,
                           std::nullopt, {}};
  for (auto& s : snapshots) {
    s.record.normalized_score = normalized_score(s.record.mean_return, result.refs);
    result.curve.push_back(s.record);
    if (!result.medium && s.record.normalized_score >= cfg.medium_score) result.medium = s.ckpt;
  }
  return result;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw_error(ErrorKind::io, "SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string variant_tag(const ExperimentConfig& cfg) {
  if (cfg.init_mode == InitMode::none && cfg.offline_iterations == 0 && !cfg.augment) return "online_td3";
  std::string tag = cfg.augment ? "augmented_td3bc_td3" : "vanilla_td3bc_td3";
  if (cfg.init_mode != InitMode::both) tag += "_init_" + to_string(cfg.init_mode);
  return tag;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const EvalHook& on_eval) {
  cfg.validate();
  const std::filesystem::path dir(cfg.output_dir);
  ArtifactWriter artifacts(dir);
  std::string header = "variant=" + variant_tag(cfg) + "\nenv=" + cfg.env + "\nseed=" + std::to_string(cfg.seed) +
                       "\ninit_mode=" + to_string(cfg.init_mode) + "\naugment=" + (cfg.augment ? "true" : "false") +
                       "\n";
  artifacts.write("resolved_config.txt", cfg.to_text());

  try {
    const auto refs = envs::load_references(cfg.refs);
    require(refs.env_name == cfg.env, ErrorKind::config,
            cfg.refs + ": reference scores are for " + refs.env_name + ", not " + cfg.env);

    std::optional<data::OfflineDataset> dataset;
    if (!cfg.dataset.empty()) {
      dataset = data::load_dataset(cfg.dataset);
      require(dataset->env_name == cfg.env, ErrorKind::config,
              cfg.dataset + ": dataset is for " + dataset->env_name + ", not " + cfg.env);
    }

    std::vector<EvalRecord> curve;
    std::optional<agents::AgentCheckpoint> offline;
    if (!cfg.offline_checkpoint.empty()) {
      offline = agents::AgentCheckpoint::load(cfg.offline_checkpoint);
      require(offline->phase == agents::Phase::offline && offline->env_name == cfg.env, ErrorKind::config,
              cfg.offline_checkpoint + ": not an offline checkpoint for " + cfg.env);
    } else if (dataset && (cfg.init_mode != InitMode::none || cfg.offline_iterations > 0 || cfg.augment)) {
      auto off = run_offline_phase(cfg, *dataset, refs, on_eval);
      if (off.world_model && cfg.wm_checkpoint.empty()) {
        BinaryWriter w;
        off.world_model->write(w);
        artifacts.write("world_model.wmck", w.take());
        artifacts.write("wm_loss.csv", wm_curve_csv(off.wm_curve));
      }
      artifacts.write("offline.agck", off.checkpoint.encode());
      curve = off.curve;
      offline = std::move(off.checkpoint);
    }

    const auto spec = envs::env_spec(cfg.env);
    const auto norm = dataset ? data::compute_norm_stats(*dataset, cfg.norm_epsilon)
                              : data::NormStats::identity(spec.obs_dim, cfg.norm_epsilon);
    auto on = run_online_phase(cfg, offline ? &*offline : nullptr, norm, refs, on_eval);
    artifacts.write("final.agck", on.checkpoint.encode());
    curve.insert(curve.end(), on.curve.begin(), on.curve.end());
    artifacts.write("curve.csv", curve_csv(curve));

    if (!cfg.expert_checkpoint.empty()) {
      const auto expert = agents::AgentCheckpoint::load(cfg.expert_checkpoint);
      const auto episode = record_episode(expert, cfg.seed);
      if (offline) artifacts.write("critic_offline.csv", critic_csv(analyze_critic(*offline, episode)));
      artifacts.write("critic_final.csv", critic_csv(analyze_critic(on.checkpoint, episode)));
    }

    header += "env_steps=" + std::to_string(on.checkpoint.env_steps) +
              "\nonline_iterations_run=" + std::to_string(on.iterations) + "\nstatus=complete\n";
    const auto manifest = artifacts.finish(header);
    return {manifest, std::move(curve), std::move(offline), std::move(on.checkpoint)};
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    artifacts.finish(header + "status=failed\nerror=" + msg + "\n");
    throw;
  }
}

}  // namespace wmrl::pipeline
