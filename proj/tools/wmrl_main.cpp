// wmrl command-line driver.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wmrl/agents/td3.hpp"
#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/core/runtime.hpp"
#include "wmrl/core/text.hpp"
#include "wmrl/data/generate.hpp"
#include "wmrl/envs/reference.hpp"
#include "wmrl/pipeline/experiment.hpp"
#include "wmrl/pipeline/grad_suites.hpp"

namespace fs = std::filesystem;
using namespace wmrl;

namespace {

void log(const std::string& msg) { std::cerr << "[wmrl] " << msg << "\n"; }

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config:
    case ErrorKind::shape:
      return 2;
    case ErrorKind::io:
    case ErrorKind::format:
      return 3;
    case ErrorKind::numeric:
    case ErrorKind::training:
    case ErrorKind::calibration:
      return 4;
  }
  return 1;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("WMRL_SEED")) return parse_u64(env, "WMRL_SEED");
  return 0;
}

// key=value echo written next to an output file.
void echo_config(const fs::path& output, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string text;
  for (const auto& [k, v] : entries) text += k + "=" + v + "\n";
  write_file(fs::path(output.string() + ".config.txt"), text);
}

std::string opt_str(const std::optional<std::string>& s) { return s.value_or(""); }

std::string flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

struct CalibrateArgs {
  std::string env;
  std::size_t episodes = 100;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> expert_ckpt;
  std::size_t train_iterations = 30000;
  std::size_t warm_start = 5000;
  std::size_t eval_every = 250;
  std::size_t eval_episodes = 10;
  double medium_score = 40.0;
  std::optional<std::string> save_expert;
  std::optional<std::string> save_medium;
  std::optional<std::string> curve;
};

int cmd_calibrate(const CalibrateArgs& a) {
  require(a.episodes >= 1, ErrorKind::config, "--episodes must be >= 1");
  const auto seed = resolve_seed(a.seed);
  std::vector<std::pair<std::string, std::string>> echo{
      {"command", "calibrate"}, {"env", a.env}, {"episodes", std::to_string(a.episodes)},
      {"seed", std::to_string(seed)}, {"out", a.out}, {"expert_ckpt", opt_str(a.expert_ckpt)}};
  envs::ReferenceScores refs;
  if (a.expert_ckpt) {
    const auto expert = agents::AgentCheckpoint::load(*a.expert_ckpt);
    require(expert.env_name == a.env, ErrorKind::config, "expert checkpoint is for " + expert.env_name);
    refs = envs::calibrate_references(a.env, expert.policy(), a.episodes, seed);
  } else {
    pipeline::CalibrationConfig cfg;
    cfg.env = a.env;
    cfg.seed = seed;
    cfg.episodes = a.episodes;
    cfg.train_iterations = a.train_iterations;
    cfg.warm_start_steps = a.warm_start;
    cfg.eval_every = a.eval_every;
    cfg.eval_episodes = a.eval_episodes;
    cfg.medium_score = a.medium_score;
    echo.insert(echo.end(), {{"train_iterations", std::to_string(cfg.train_iterations)},
                             {"warm_start", std::to_string(cfg.warm_start_steps)},
                             {"eval_every", std::to_string(cfg.eval_every)},
                             {"eval_episodes", std::to_string(cfg.eval_episodes)},
                             {"medium_score", format_double(cfg.medium_score)},
                             {"save_expert", opt_str(a.save_expert)},
                             {"save_medium", opt_str(a.save_medium)}});
    log("training the fully online expert for " + std::to_string(cfg.train_iterations) + " iterations");
    auto result = pipeline::calibrate_with_online_expert(cfg);
    refs = result.refs;
    if (a.save_expert) result.expert.save(*a.save_expert);
    if (a.curve) pipeline::save_curve(result.curve, *a.curve);
    if (a.save_medium) {
      require(result.medium.has_value(), ErrorKind::calibration,
              "no evaluation of the expert run reached normalized score " + format_double(cfg.medium_score));
      result.medium->save(*a.save_medium);
      log("medium checkpoint at iteration " + std::to_string(result.medium->iteration));
    }
  }
  envs::save_references(refs, a.out);
  echo_config(a.out, echo);
  log("random_ref=" + format_double(refs.random_ref) + " expert_ref=" + format_double(refs.expert_ref));
  return 0;
}

struct GenArgs {
  std::string env;
  std::string flavor;
  std::size_t size = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> medium_ckpt;
  std::optional<std::string> expert_ckpt;
  std::optional<std::string> source;
};

int cmd_gen_dataset(const GenArgs& a) {
  const auto seed = resolve_seed(a.seed);
  data::OfflineDataset ds;
  if (a.source) {
    // Subsample an existing dataset instead of generating one.
    const auto src = data::load_dataset(*a.source);
    require(src.env_name == a.env, ErrorKind::config, *a.source + " is a " + src.env_name + " dataset");
    ds = data::subsample_dataset(src, a.size, seed);
  } else {
    const auto flavor = data::parse_flavor(a.flavor);
    std::optional<agents::AgentCheckpoint> medium, expert;
    if (a.medium_ckpt) medium = agents::AgentCheckpoint::load(*a.medium_ckpt);
    if (a.expert_ckpt) expert = agents::AgentCheckpoint::load(*a.expert_ckpt);
    ds = data::generate_dataset(a.env, flavor, a.size, seed, medium ? &*medium : nullptr,
                                expert ? &*expert : nullptr);
  }
  data::save_dataset(ds, a.out);
  echo_config(a.out, {{"command", "gen-dataset"},
                      {"env", a.env},
                      {"flavor", a.source ? data::to_string(ds.flavor) : a.flavor},
                      {"size", std::to_string(a.size)},
                      {"seed", std::to_string(seed)},
                      {"out", a.out},
                      {"medium_ckpt", opt_str(a.medium_ckpt)},
                      {"expert_ckpt", opt_str(a.expert_ckpt)},
                      {"source", opt_str(a.source)}});
  log("wrote " + std::to_string(ds.size()) + " transitions to " + a.out);
  return 0;
}

struct TrainWmArgs {
  std::string dataset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t iterations = 10000;
  std::size_t batch_size = 256;
  std::size_t hidden = 512;
  std::size_t hidden_layers = 3;
  std::size_t latent_dim = 0;
  std::string kl_direction = "posterior_to_prior";
  double learning_rate = 3e-4;
  double norm_epsilon = 1e-3;
  std::optional<std::string> curve;
};

int cmd_train_wm(const TrainWmArgs& a) {
  const auto seed = resolve_seed(a.seed);
  // Reuse the experiment-config parser for the world-model keys.
  pipeline::ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.wm_iterations = a.iterations;
  cfg.wm_batch_size = a.batch_size;
  cfg.wm.hidden = a.hidden;
  cfg.wm.hidden_layers = a.hidden_layers;
  cfg.wm.latent_dim = a.latent_dim;
  cfg.set("wm_kl_direction", a.kl_direction);
  cfg.wm_learning_rate = a.learning_rate;
  require(a.norm_epsilon > 0.0, ErrorKind::config, "--norm-epsilon must be positive");

  const auto dataset = data::load_dataset(a.dataset);
  const auto norm = data::compute_norm_stats(dataset, a.norm_epsilon);
  Rng init(derive_seed(seed, "wm"));
  auto model = wm::WorldModel::create(dataset.obs_dim(), dataset.act_dim(), cfg.wm, init);
  wm::WmTrainConfig tc;
  tc.iterations = cfg.wm_iterations;
  tc.batch_size = cfg.wm_batch_size;
  tc.seed = derive_seed(seed, "wm-train");
  tc.adam.learning_rate = cfg.wm_learning_rate;
  const auto curve = wm::train_world_model(model, dataset, norm, tc);
  model.save(a.out);
  if (a.curve) {
    std::string text = "iter,total,recon_elbo,kl,state_recon,latent_recon\n";
    for (const auto& p : curve) {
      text += std::to_string(p.iteration) + "," + format_double(p.loss.total) + "," +
              format_double(p.loss.recon_elbo) + "," + format_double(p.loss.kl) + "," +
              format_double(p.loss.state_recon) + "," + format_double(p.loss.latent_recon) + "\n";
    }
    write_file(*a.curve, text);
  }
  echo_config(a.out, {{"command", "train-wm"},
                      {"dataset", a.dataset},
                      {"seed", std::to_string(seed)},
                      {"out", a.out},
                      {"iterations", std::to_string(a.iterations)},
                      {"batch_size", std::to_string(a.batch_size)},
                      {"hidden", std::to_string(a.hidden)},
                      {"hidden_layers", std::to_string(a.hidden_layers)},
                      {"latent_dim", std::to_string(a.latent_dim)},
                      {"kl_direction", a.kl_direction},
                      {"learning_rate", format_double(a.learning_rate)},
                      {"norm_epsilon", format_double(a.norm_epsilon)}});
  if (!curve.empty()) log("final world-model loss " + format_double(curve.back().loss.total));
  return 0;
}

int cmd_run(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
  const auto file = parse_key_values(read_file(config_path), config_path);
  pipeline::ExperimentConfig cfg;
  for (const auto& [k, v] : file) cfg.set(k, v);
  if (!file.contains("seed") && !overrides.contains("seed")) {
    if (const char* env = std::getenv("WMRL_SEED")) cfg.set("seed", env);
  }
  for (const auto& [k, v] : overrides) {
    auto it = file.find(k);
    if (it != file.end() && it->second != v) log("flag " + flag_name(k) + "=" + v + " overrides file value " + it->second);
    cfg.set(k, v);
  }
  log("resolved config:\n" + cfg.to_text());
  const auto result = pipeline::run_experiment(cfg, [](const pipeline::EvalRecord& r) {
    log(agents::to_string(r.phase) + " iter " + std::to_string(r.iteration) + " env_steps " +
        std::to_string(r.env_steps) + " return " + format_double(r.mean_return) + " score " +
        format_double(r.normalized_score));
  });
  log("manifest " + result.manifest.string());
  return 0;
}

struct AnalyzeArgs {
  std::string checkpoint;
  std::string env;
  std::string expert_ckpt;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_analyze_critic(const AnalyzeArgs& a) {
  const auto seed = resolve_seed(a.seed);
  const auto ckpt = agents::AgentCheckpoint::load(a.checkpoint);
  const auto expert = agents::AgentCheckpoint::load(a.expert_ckpt);
  require(ckpt.env_name == a.env && expert.env_name == a.env, ErrorKind::usage,
          "checkpoints must both be for " + a.env);
  const auto episode = pipeline::record_episode(expert, seed);
  const auto analysis = pipeline::analyze_critic(ckpt, episode);
  write_file(a.out, pipeline::critic_csv(analysis));
  echo_config(a.out, {{"command", "analyze-critic"},
                      {"checkpoint", a.checkpoint},
                      {"env", a.env},
                      {"expert_ckpt", a.expert_ckpt},
                      {"seed", std::to_string(seed)},
                      {"out", a.out}});
  std::cout << pipeline::critic_summary(analysis);
  return 0;
}

int cmd_grad_check(std::optional<std::uint64_t> seed_flag, double tolerance, const std::string& fault,
                   const std::optional<std::string>& out) {
  pipeline::GradSuiteOptions opt;
  opt.seed = resolve_seed(seed_flag);
  opt.tolerance = tolerance;
  opt.inject_fault = fault;
  bool all = true;
  std::string report;
  for (const auto& r : pipeline::run_grad_suites(opt)) {
    all = all && r.pass;
    report += r.name + " " + (r.pass ? "PASS" : "FAIL") + " max_rel_error=" + format_double(r.max_rel_error) +
              " checked=" + std::to_string(r.checked) + " worst=" + r.worst_parameter + "\n";
  }
  std::cout << report;
  if (out) {
    write_file(*out, report);
    echo_config(*out, {{"command", "grad-check"},
                       {"seed", std::to_string(opt.seed)},
                       {"tolerance", format_double(tolerance)},
                       {"inject_fault", fault},
                       {"out", *out}});
  }
  return all ? 0 : 4;
}

int cmd_export_curves(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<std::pair<std::string, std::vector<pipeline::EvalRecord>>> runs;
  for (const auto& in : inputs) {
    std::string label, path = in;
    if (const auto eq = in.find('='); eq != std::string::npos) {
      label = in.substr(0, eq);
      path = in.substr(eq + 1);
    } else {
      const fs::path p(in);
      label = p.has_parent_path() ? p.parent_path().filename().string() : p.stem().string();
    }
    runs.emplace_back(label, pipeline::load_curve(path));
  }
  write_file(out, pipeline::merge_curves(runs));
  std::string joined;
  for (const auto& in : inputs) joined += (joined.empty() ? "" : " ") + in;
  echo_config(out, {{"command", "export-curves"}, {"inputs", joined}, {"out", out}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"World-model augmented offline-to-online RL"};
  app.require_subcommand(1);

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Compute normalized-score reference returns");
  calibrate->add_option("--env", cal.env, "Environment name")->required();
  calibrate->add_option("--episodes", cal.episodes, "Episodes per policy");
  calibrate->add_option("--seed", cal.seed, "Seed (default: $WMRL_SEED or 0)");
  calibrate->add_option("--out", cal.out, "Reference file to write")->required();
  calibrate->add_option("--expert-ckpt", cal.expert_ckpt, "Expert checkpoint; trains one when omitted");
  calibrate->add_option("--train-iterations", cal.train_iterations, "Expert training iterations");
  calibrate->add_option("--warm-start", cal.warm_start, "Expert warm-start steps");
  calibrate->add_option("--eval-every", cal.eval_every, "Evaluation cadence of the expert run");
  calibrate->add_option("--eval-episodes", cal.eval_episodes, "Episodes per evaluation");
  calibrate->add_option("--medium-score", cal.medium_score, "Score defining the medium checkpoint");
  calibrate->add_option("--save-expert", cal.save_expert, "Write the trained expert checkpoint");
  calibrate->add_option("--save-medium", cal.save_medium, "Write the medium checkpoint");
  calibrate->add_option("--curve", cal.curve, "Write the expert run's curve");

  GenArgs gen;
  auto* gen_dataset = app.add_subcommand("gen-dataset", "Generate an offline dataset");
  gen_dataset->add_option("--env", gen.env, "Environment name")->required();
  gen_dataset->add_option("--flavor", gen.flavor, "random | medium | medium_replay | medium_expert");
  gen_dataset->add_option("--size", gen.size, "Number of transitions")->required();
  gen_dataset->add_option("--seed", gen.seed, "Seed (default: $WMRL_SEED or 0)");
  gen_dataset->add_option("--out", gen.out, "Dataset file to write")->required();
  gen_dataset->add_option("--medium-ckpt", gen.medium_ckpt, "Medium policy checkpoint");
  gen_dataset->add_option("--expert-ckpt", gen.expert_ckpt, "Expert policy checkpoint");
  auto* source_opt = gen_dataset->add_option("--source", gen.source, "Subsample this dataset instead");
  gen_dataset->callback([&] {
    if (gen.flavor.empty() && !*source_opt) throw CLI::RequiredError("--flavor");
  });

  TrainWmArgs twm;
  auto* train_wm = app.add_subcommand("train-wm", "Train a world model on a dataset");
  train_wm->add_option("--dataset", twm.dataset, "Dataset file")->required();
  train_wm->add_option("--seed", twm.seed, "Seed (default: $WMRL_SEED or 0)");
  train_wm->add_option("--out", twm.out, "World-model checkpoint to write")->required();
  train_wm->add_option("--iterations", twm.iterations, "Training iterations");
  train_wm->add_option("--batch-size", twm.batch_size, "Minibatch size");
  train_wm->add_option("--hidden", twm.hidden, "Hidden width");
  train_wm->add_option("--hidden-layers", twm.hidden_layers, "Hidden layers");
  train_wm->add_option("--latent-dim", twm.latent_dim, "Latent size (0: observation size)");
  train_wm->add_option("--kl-direction", twm.kl_direction, "posterior_to_prior | prior_to_posterior");
  train_wm->add_option("--learning-rate", twm.learning_rate, "Adam learning rate");
  train_wm->add_option("--norm-epsilon", twm.norm_epsilon, "Normalization epsilon");
  train_wm->add_option("--curve", twm.curve, "Write the loss curve CSV");

  std::string run_config;
  std::map<std::string, std::string> run_values;
  std::vector<std::pair<std::string, CLI::Option*>> run_opts;
  auto* run = app.add_subcommand("run", "Run an offline-to-online experiment");
  run->add_option("--config", run_config, "key=value experiment config")->required();
  for (const auto& key : pipeline::ExperimentConfig::keys()) {
    run_opts.emplace_back(key, run->add_option(flag_name(key), run_values[key], "Override '" + key + "'"));
  }

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze-critic", "Critic Q-values over one expert episode");
  analyze->add_option("--checkpoint", an.checkpoint, "Agent checkpoint to analyze")->required();
  analyze->add_option("--env", an.env, "Environment name")->required();
  analyze->add_option("--expert-ckpt", an.expert_ckpt, "Expert producing the episode")->required();
  analyze->add_option("--seed", an.seed, "Episode seed (default: $WMRL_SEED or 0)");
  analyze->add_option("--out", an.out, "Analysis CSV to write")->required();

  std::optional<std::uint64_t> gc_seed;
  double gc_tol = 1e-4;
  std::string gc_fault;
  std::optional<std::string> gc_out;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference checks of every loss");
  grad->add_option("--seed", gc_seed, "Seed (default: $WMRL_SEED or 0)");
  grad->add_option("--tolerance", gc_tol, "Maximum relative error");
  grad->add_option("--inject-fault", gc_fault, "Test hook: corrupt one suite's gradient");
  grad->add_option("--out", gc_out, "Write the report here too");

  std::vector<std::string> ex_inputs;
  std::string ex_out;
  auto* exporter = app.add_subcommand("export-curves", "Merge curve CSVs into one long-format CSV");
  exporter->add_option("inputs", ex_inputs, "Curve files, optionally label=path")->required();
  exporter->add_option("--out", ex_out, "Merged CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*calibrate) return cmd_calibrate(cal);
    if (*gen_dataset) return cmd_gen_dataset(gen);
    if (*train_wm) return cmd_train_wm(twm);
    if (*run) {
      std::map<std::string, std::string> overrides;
      for (const auto& [key, opt] : run_opts) {
        if (*opt) overrides[key] = run_values[key];
      }
      return cmd_run(run_config, overrides);
    }
    if (*analyze) return cmd_analyze_critic(an);
    if (*grad) return cmd_grad_check(gc_seed, gc_tol, gc_fault, gc_out);
    if (*exporter) return cmd_export_curves(ex_inputs, ex_out);
  } catch (const Error& e) {
    std::cerr << "wmrl: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "wmrl: I/O error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "wmrl: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
