// End-to-end acceptance run. Usage: wmrl_acceptance WORK_DIR [--reuse]
// Prints one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wmrl/agents/online.hpp"
#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/core/runtime.hpp"
#include "wmrl/data/generate.hpp"
#include "wmrl/pipeline/experiment.hpp"
#include "wmrl/pipeline/grad_suites.hpp"

using namespace wmrl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Run sizes.
constexpr std::size_t kSeeds = 5;
constexpr std::uint64_t kFirstSeed = 1;
constexpr std::size_t kDatasetSize = 10000;
constexpr std::size_t kHoldout = 2000;
constexpr std::size_t kBaselineBudget = 100000;  // env steps, warm start included
constexpr std::size_t kOfflineIterations = 10000;
constexpr std::size_t kOnlineIterations = 20000;
constexpr std::size_t kEvalEvery = 1000;
constexpr std::size_t kWarmStart = 5000;
constexpr std::size_t kWmHidden = 256;
constexpr std::size_t kWmHiddenLayers = 2;
constexpr std::size_t kWmIterations = 5000;
constexpr double kScoreTarget = 90.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(prec);
  s << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v, int prec = 1) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + (std::isinf(x) ? std::string("inf") : fmt(x, prec));
  return out;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

bool manifest_complete(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  std::string line;
  while (std::getline(in, line)) {
    if (line == "status=complete") return true;
  }
  return false;
}

struct Context {
  fs::path work;
  bool reuse = false;
  fs::path refs_path, expert_path, medium_path, medium_data, replay_data, holdout_data;
  envs::ReferenceScores refs;
  std::optional<agents::AgentCheckpoint> expert;
  std::size_t medium_iteration = 0;
};

// ---------------------------------------------------------------------------
// Shared artifacts.

void calibrate(Context& ctx) {
  const auto dir = ctx.work / "calibration";
  fs::create_directories(dir);
  ctx.refs_path = dir / "refs.txt";
  ctx.expert_path = dir / "expert.agck";
  ctx.medium_path = dir / "medium.agck";
  if (!(ctx.reuse && fs::exists(ctx.refs_path) && fs::exists(ctx.expert_path) && fs::exists(ctx.medium_path))) {
    progress("calibrating pendulum references with a fully online expert");
    const auto t0 = Clock::now();
    pipeline::CalibrationConfig cfg;
    cfg.seed = 0;
    auto cal = pipeline::calibrate_with_online_expert(cfg);
    if (!cal.medium) throw_error(ErrorKind::calibration, "no medium checkpoint found");
    envs::save_references(cal.refs, ctx.refs_path);
    cal.expert.save(ctx.expert_path);
    cal.medium->save(ctx.medium_path);
    pipeline::save_curve(cal.curve, dir / "curve.csv");
    progress("calibration took " + fmt(seconds_since(t0), 0) + " s");
  }
  ctx.refs = envs::load_references(ctx.refs_path);
  ctx.expert = agents::AgentCheckpoint::load(ctx.expert_path);
  ctx.medium_iteration = agents::AgentCheckpoint::load(ctx.medium_path).iteration;
  progress("refs random=" + fmt(ctx.refs.random_ref) + " expert=" + fmt(ctx.refs.expert_ref) +
           " medium checkpoint at iteration " + std::to_string(ctx.medium_iteration));
}

data::OfflineDataset slice(const data::OfflineDataset& src, std::size_t begin, std::size_t end) {
  data::OfflineDataset out{src.env_name, src.flavor, src.seed,
                           data::TransitionColumns(src.obs_dim(), src.act_dim())};
  out.transitions.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.transitions.push_back(src.transitions.at(i));
  return out;
}

void make_datasets(Context& ctx) {
  const auto dir = ctx.work / "data";
  fs::create_directories(dir);
  ctx.medium_data = dir / "medium.orld";
  ctx.replay_data = dir / "medium_replay.orld";
  ctx.holdout_data = dir / "medium_replay_holdout.orld";
  if (ctx.reuse && fs::exists(ctx.medium_data) && fs::exists(ctx.replay_data) && fs::exists(ctx.holdout_data)) return;
  progress("generating datasets");
  const auto medium = agents::AgentCheckpoint::load(ctx.medium_path);
  data::save_dataset(data::generate_dataset("pendulum", data::Flavor::medium, kDatasetSize, 0, &medium),
                     ctx.medium_data);
  // The replay stream is a prefix property: its first 10k rows are the 10k
  // medium-replay dataset, the following rows are held out.
  const auto stream =
      data::generate_dataset("pendulum", data::Flavor::medium_replay, kDatasetSize + kHoldout, 0, &medium);
  data::save_dataset(slice(stream, 0, kDatasetSize), ctx.replay_data);
  data::save_dataset(slice(stream, kDatasetSize, stream.size()), ctx.holdout_data);
}

pipeline::ExperimentConfig base_config(const Context& ctx, std::uint64_t seed, const fs::path& out) {
  pipeline::ExperimentConfig cfg;
  cfg.env = "pendulum";
  cfg.refs = ctx.refs_path.string();
  cfg.output_dir = out.string();
  cfg.seed = seed;
  cfg.eval_every = kEvalEvery;
  cfg.warm_start_steps = kWarmStart;
  cfg.wm.hidden = kWmHidden;
  cfg.wm.hidden_layers = kWmHiddenLayers;
  cfg.wm_iterations = kWmIterations;
  return cfg;
}

std::vector<pipeline::EvalRecord> run_or_load(const Context& ctx, const pipeline::ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  if (ctx.reuse && manifest_complete(dir)) return pipeline::load_curve(dir / "curve.csv");
  progress("running " + pipeline::variant_tag(cfg) + " seed " + std::to_string(cfg.seed) + " -> " +
           dir.filename().string());
  const auto t0 = Clock::now();
  auto result = pipeline::run_experiment(cfg);
  progress("  took " + fmt(seconds_since(t0), 0) + " s");
  return result.curve;
}

std::vector<pipeline::EvalRecord> online_part(const std::vector<pipeline::EvalRecord>& curve) {
  std::vector<pipeline::EvalRecord> out;
  for (const auto& r : curve) {
    if (r.phase == agents::Phase::online) out.push_back(r);
  }
  return out;
}

double steps_to_target(const std::vector<pipeline::EvalRecord>& curve) {
  const auto* hit = pipeline::first_reaching(curve, kScoreTarget);
  return hit ? static_cast<double>(hit->env_steps) : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  const auto reports = pipeline::run_grad_suites();
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string failed;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.pass || !(r.max_rel_error < 1e-4)) failed += " " + r.name;
  }
  const bool pass = failed.empty() && elapsed < 60.0 && reports.size() == pipeline::grad_suite_names().size();
  return {pass, std::to_string(reports.size()) + " suites, worst relative error " + std::to_string(worst) +
                    ", " + fmt(elapsed, 1) + " s" + (failed.empty() ? "" : ", failed:" + failed)};
}

// Monte Carlo with per-dimension stratified (Latin hypercube) standard
// normal draws; the log ratio is additive over dimensions.
Outcome criterion_kl() {
  const auto t0 = Clock::now();
  constexpr std::size_t kPairs = 100, kSamples = 100000, kDim = 3;
  const boost::math::normal_distribution<double> std_normal;
  Rng rng(20240);
  std::vector<double> eps(kSamples);
  std::vector<std::size_t> perm(kSamples);
  double worst_fwd = 0.0, worst_rev = 0.0;
  for (std::size_t pair = 0; pair < kPairs; ++pair) {
    nn::Matrix mu(1, kDim), lv(1, kDim);
    for (std::size_t d = 0; d < kDim; ++d) {
      mu(0, static_cast<Eigen::Index>(d)) = rng.uniform(-1.0, 1.0);
      lv(0, static_cast<Eigen::Index>(d)) = rng.uniform(-1.0, 1.0);
    }
    double mc_fwd = 0.0, mc_rev = 0.0;
    for (std::size_t d = 0; d < kDim; ++d) {
      const double m = mu(0, static_cast<Eigen::Index>(d)), l = lv(0, static_cast<Eigen::Index>(d));
      const double s = std::exp(0.5 * l);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = kSamples - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
      double sum_fwd = 0.0, sum_rev = 0.0;
      for (std::size_t i = 0; i < kSamples; ++i) {
        const double u = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(kSamples);
        const double e = boost::math::quantile(std_normal, std::clamp(u, 1e-300, 1.0 - 1e-16));
        // z ~ q = N(m, s^2): log q(z) - log p(z)
        const double z = m + s * e;
        sum_fwd += -0.5 * e * e - 0.5 * l + 0.5 * z * z;
        // x ~ p = N(0, 1): log p(x) - log q(x)
        const double r = (e - m) / s;
        sum_rev += -0.5 * e * e + 0.5 * l + 0.5 * r * r;
      }
      mc_fwd += sum_fwd / static_cast<double>(kSamples);
      mc_rev += sum_rev / static_cast<double>(kSamples);
    }
    worst_fwd = std::max(worst_fwd, std::abs(mc_fwd / wm::kl_to_standard_normal(mu, lv) - 1.0));
    worst_rev = std::max(worst_rev, std::abs(mc_rev / wm::kl_from_standard_normal(mu, lv) - 1.0));
  }
  const bool pass = worst_fwd < 0.01 && worst_rev < 0.01;
  return {pass, "100 pairs x 1e5 samples, worst relative error " + fmt(100 * worst_fwd, 4) + "% (q||p), " +
                    fmt(100 * worst_rev, 4) + "% (p||q), " + fmt(seconds_since(t0), 1) + " s"};
}

struct Fidelity {
  double mse = 0.0;
  double variance = 0.0;
  double sample_var = 0.0;
  double final_loss = 0.0;
};

Fidelity fidelity(const data::OfflineDataset& train, const data::OfflineDataset& holdout,
                  const wm::WorldModelConfig& cfg, std::size_t iterations, const fs::path& save_to = {}) {
  const auto norm = data::compute_norm_stats(train);
  Rng init(derive_seed(0, "wm"));
  auto model = wm::WorldModel::create(train.obs_dim(), train.act_dim(), cfg, init);
  wm::WmTrainConfig tc;
  tc.iterations = iterations;
  tc.seed = derive_seed(0, "wm-train");
  const auto curve = wm::train_world_model(model, train, norm, tc);
  if (!save_to.empty()) model.save(save_to);

  std::vector<std::size_t> all(holdout.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto batch = holdout.transitions.gather(all);
  const nn::Matrix s = norm.normalize(batch.states);
  const nn::Matrix s_next = norm.normalize(batch.next_states);
  Rng unused(0);
  const nn::Matrix pred = wm::generate_next_state(model, s, batch.actions, unused, wm::EncodeMode::mean);
  Fidelity f;
  f.mse = (pred - s_next).squaredNorm() / static_cast<double>(pred.size());
  const nn::Matrix centered = s_next.rowwise() - s_next.colwise().mean();
  f.variance =
      centered.squaredNorm() / static_cast<double>(centered.rows() - 1) / static_cast<double>(centered.cols());

  // Sample mode on one fixed (s, a) repeated.
  constexpr Eigen::Index kRepeats = 256;
  const nn::Matrix s_rep = s.row(0).replicate(kRepeats, 1);
  const nn::Matrix a_rep = batch.actions.row(0).replicate(kRepeats, 1);
  Rng sample_rng(7);
  const nn::Matrix samples = wm::generate_next_state(model, s_rep, a_rep, sample_rng, wm::EncodeMode::sample);
  const nn::Matrix sc = samples.rowwise() - samples.colwise().mean();
  f.sample_var = sc.colwise().squaredNorm().minCoeff() / static_cast<double>(kRepeats - 1);
  f.final_loss = curve.back().loss.total;
  return f;
}

Outcome criterion_world_model(const Context& ctx) {
  const auto t0 = Clock::now();
  const auto train = data::load_dataset(ctx.replay_data);
  const auto holdout = data::load_dataset(ctx.holdout_data);
  wm::WorldModelConfig cfg;
  cfg.hidden = kWmHidden;
  cfg.hidden_layers = kWmHiddenLayers;
  const auto f = fidelity(train, holdout, cfg, 10000, ctx.work / "data" / "medium_replay.wmck");
  const double elapsed = seconds_since(t0);

  // Diagnostic only: the same model with a lighter KL term.
  auto light = cfg;
  light.weights.kl = 0.1;
  const auto d = fidelity(train, holdout, light, 3000);

  const bool pass = f.mse < 0.1 * f.variance && f.sample_var > 0.0 && elapsed < 600.0;
  return {pass, "held-out MSE " + fmt(f.mse, 5) + " vs 0.1 x variance " + fmt(0.1 * f.variance, 5) +
                    " (ratio " + fmt(f.mse / f.variance, 3) + "), min sample-mode variance " +
                    std::to_string(f.sample_var) + ", final train loss " + fmt(f.final_loss, 4) + ", " +
                    fmt(elapsed, 0) + " s; diagnostic with KL weight 0.1: ratio " + fmt(d.mse / d.variance, 4)};
}

struct BaselineResult {
  Outcome outcome;
  double median_steps = 0.0;
};

BaselineResult criterion_baseline(const Context& ctx) {
  const auto t0 = Clock::now();
  std::vector<double> steps;
  for (std::size_t k = 0; k < kSeeds; ++k) {
    const std::uint64_t seed = kFirstSeed + k;
    auto cfg = base_config(ctx, seed, ctx.work / "runs" / ("online_td3_seed" + std::to_string(seed)));
    cfg.init_mode = pipeline::InitMode::none;
    cfg.augment = false;
    cfg.offline_iterations = 0;
    cfg.online_iterations = kBaselineBudget - kWarmStart;
    cfg.stop_score = kScoreTarget;
    steps.push_back(steps_to_target(run_or_load(ctx, cfg)));
  }
  const double med = median(steps);
  const double elapsed = seconds_since(t0);
  const bool pass = med <= static_cast<double>(kBaselineBudget) && (ctx.reuse || elapsed < 3600.0);
  return {{pass, "env steps to score 90 per seed [" + list(steps, 0) + "], median " + fmt(med, 0) + ", " +
                     fmt(elapsed, 0) + " s"},
          med};
}

struct PairedRuns {
  std::vector<std::vector<pipeline::EvalRecord>> ours, vanilla;
  std::vector<fs::path> ours_dirs, vanilla_dirs;
};

PairedRuns run_pairs(const Context& ctx) {
  PairedRuns out;
  for (std::size_t k = 0; k < kSeeds; ++k) {
    const std::uint64_t seed = kFirstSeed + k;
    for (bool augment : {true, false}) {
      const auto dir = ctx.work / "runs" / ((augment ? "ours_seed" : "vanilla_seed") + std::to_string(seed));
      auto cfg = base_config(ctx, seed, dir);
      cfg.dataset = ctx.medium_data.string();
      cfg.augment = augment;
      cfg.offline_iterations = kOfflineIterations;
      cfg.online_iterations = kOnlineIterations;
      cfg.expert_checkpoint = ctx.expert_path.string();
      auto curve = run_or_load(ctx, cfg);
      (augment ? out.ours : out.vanilla).push_back(std::move(curve));
      (augment ? out.ours_dirs : out.vanilla_dirs).push_back(dir);
    }
  }
  return out;
}

Outcome criterion_jump_start(const PairedRuns& runs, double baseline_median) {
  std::vector<double> steps;
  for (const auto& c : runs.ours) steps.push_back(steps_to_target(c));
  const double med = median(steps);
  return {med < baseline_median, "ours env steps to score 90 per seed [" + list(steps, 0) + "], median " +
                                     fmt(med, 0) + " vs baseline median " + fmt(baseline_median, 0)};
}

std::string read_bytes(const fs::path& p) { return read_file(p); }

Outcome criterion_ordering(const Context& ctx, const PairedRuns& runs) {
  // Median per online evaluation point from 20k env steps on.
  std::map<std::uint64_t, std::vector<double>> ours, vanilla;
  for (const auto& c : runs.ours) {
    for (const auto& r : online_part(c)) {
      if (r.env_steps >= 20000) ours[r.env_steps].push_back(r.normalized_score);
    }
  }
  for (const auto& c : runs.vanilla) {
    for (const auto& r : online_part(c)) {
      if (r.env_steps >= 20000) vanilla[r.env_steps].push_back(r.normalized_score);
    }
  }
  bool ordered = !ours.empty() && ours.size() == vanilla.size();
  std::string points;
  for (const auto& [steps, scores] : ours) {
    const auto it = vanilla.find(steps);
    if (it == vanilla.end() || scores.size() != kSeeds || it->second.size() != kSeeds) {
      ordered = false;
      continue;
    }
    const double mo = median(scores), mv = median(it->second);
    if (mo < mv) ordered = false;
    points += " " + std::to_string(steps) + ":" + fmt(mo, 2) + "/" + fmt(mv, 2);
  }

  // Vanilla against ours with p = 0 on short runs: every artifact the two
  // share must be byte-identical.
  bool identical = true;
  std::string mismatch;
  for (std::size_t k = 0; k < kSeeds; ++k) {
    const std::uint64_t seed = kFirstSeed + k;
    std::vector<fs::path> dirs;
    for (bool augment : {false, true}) {
      const auto dir = ctx.work / "p0" / ((augment ? "ours_p0_seed" : "vanilla_seed") + std::to_string(seed));
      auto cfg = base_config(ctx, seed, dir);
      cfg.dataset = ctx.medium_data.string();
      cfg.augment = augment;
      cfg.hyper.augment_fraction = 0.0;
      cfg.offline_iterations = 1000;
      cfg.online_iterations = 1000;
      cfg.warm_start_steps = 1000;
      cfg.eval_every = 250;
      cfg.wm_iterations = 100;
      run_or_load(ctx, cfg);
      dirs.push_back(dir);
    }
    for (const char* name : {"offline.agck", "final.agck", "curve.csv"}) {
      if (read_bytes(dirs[0] / name) != read_bytes(dirs[1] / name)) {
        identical = false;
        mismatch += " seed" + std::to_string(seed) + "/" + name;
      }
    }
  }
  return {ordered && identical, "median ours/vanilla at env steps" + points +
                                    (identical ? "; vanilla == ours(p=0) byte-identical on 5 seeds"
                                               : "; p=0 mismatch:" + mismatch)};
}

Outcome criterion_critic(const Context& ctx, const PairedRuns& runs) {
  std::size_t total = 0, inside = 0;
  double lo = 0, hi = 0, qmin = std::numeric_limits<double>::infinity(), qmax = -qmin;
  for (std::size_t k = 0; k < kSeeds; ++k) {
    const auto episode = pipeline::record_episode(*ctx.expert, kFirstSeed + k);
    for (bool augment : {true, false}) {
      const auto dir = augment ? runs.ours_dirs[k] : runs.vanilla_dirs[k];
      const auto ckpt = agents::AgentCheckpoint::load(dir / "offline.agck");
      const auto a = pipeline::analyze_critic(ckpt, episode);
      write_file(dir / "critic_offline_expert_episode.csv", pipeline::critic_csv(a));
      if (!augment) continue;
      lo = 1.2 * a.bound_low;
      hi = 0.05 * std::abs(a.bound_low);
      for (std::size_t i = 0; i < a.q1.size(); ++i) {
        for (double q : {a.q1[i], a.q2[i]}) {
          ++total;
          if (q >= lo && q <= hi) ++inside;
          qmin = std::min(qmin, q);
          qmax = std::max(qmax, q);
        }
      }
    }
  }
  return {total > 0 && inside == total, std::to_string(inside) + "/" + std::to_string(total) +
                                            " augmented Q-values in [" + fmt(lo, 1) + ", " + fmt(hi, 1) +
                                            "], observed [" + fmt(qmin, 1) + ", " + fmt(qmax, 1) +
                                            "]; vanilla CSVs written"};
}

Outcome criterion_ablation(const Context& ctx, const PairedRuns& runs) {
  std::map<std::string, std::vector<double>> finals;
  for (const auto& c : runs.ours) finals["both"].push_back(c.back().normalized_score);
  bool complete = true;
  for (auto mode : {pipeline::InitMode::actor_only, pipeline::InitMode::critic_only}) {
    const auto name = pipeline::to_string(mode);
    for (std::size_t k = 0; k < kSeeds; ++k) {
      const std::uint64_t seed = kFirstSeed + k;
      const auto dir = ctx.work / "runs" / (name + "_seed" + std::to_string(seed));
      auto cfg = base_config(ctx, seed, dir);
      cfg.dataset = ctx.medium_data.string();
      cfg.init_mode = mode;
      cfg.offline_checkpoint = (runs.ours_dirs[k] / "offline.agck").string();
      cfg.offline_iterations = kOfflineIterations;
      cfg.online_iterations = kOnlineIterations;
      const auto curve = run_or_load(ctx, cfg);
      complete = complete && manifest_complete(dir) && fs::exists(dir / "curve.csv") && !curve.empty();
      finals[name].push_back(curve.back().normalized_score);
    }
  }
  const double both = median(finals["both"]), actor = median(finals["actor_only"]);
  const double critic = median(finals["critic_only"]);
  return {complete && both >= actor - 5.0, "final median both " + fmt(both, 2) + ", actor_only " + fmt(actor, 2) +
                                               ", critic_only " + fmt(critic, 2)};
}

// -- criterion 9 ------------------------------------------------------------

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

Outcome criterion_determinism(const Context& ctx) {
  const auto root = ctx.work / "determinism";
  fs::remove_all(root);
  const std::string cli = WMRL_CLI_PATH;
  // Relative paths only, so the two trees must match byte for byte.
  const std::vector<std::string> commands = {
      "calibrate --env pendulum --episodes 5 --expert-ckpt expert.agck --out refs.txt",
      "gen-dataset --env pendulum --flavor random --size 10000 --seed 3 --out random.orld",
      "gen-dataset --env pendulum --flavor medium --size 2000 --seed 3 --medium-ckpt medium.agck --out medium.orld",
      "gen-dataset --env pendulum --flavor medium_replay --size 2000 --medium-ckpt medium.agck --out replay.orld",
      "gen-dataset --env pendulum --flavor medium_expert --size 2000 --seed 3 --medium-ckpt medium.agck "
      "--expert-ckpt expert.agck --out mixed.orld",
      "gen-dataset --env pendulum --source random.orld --size 500 --seed 4 --out sub.orld",
      "train-wm --dataset medium.orld --iterations 200 --hidden 64 --hidden-layers 2 --seed 5 --out wm.wmck "
      "--curve wm.csv",
      "run --config run.cfg --output-dir run",
      "analyze-critic --checkpoint run/offline.agck --env pendulum --expert-ckpt expert.agck --seed 2 --out critic.csv",
      "export-curves run/curve.csv --out merged.csv",
      "grad-check --out grad.txt",
  };
  const std::string run_cfg =
      "env=pendulum\ndataset=medium.orld\nrefs=refs.txt\nseed=9\noffline_iterations=300\nonline_iterations=300\n"
      "eval_every=100\neval_episodes=2\nwarm_start_steps=200\nbuffer_capacity=5000\nwm_iterations=100\n"
      "wm_hidden=64\nhidden=64\nexpert_checkpoint=expert.agck\n";
  std::vector<std::map<std::string, std::string>> trees;
  std::string failures;
  for (const char* name : {"a", "b"}) {
    const auto dir = root / name;
    fs::create_directories(dir);
    fs::copy_file(ctx.expert_path, dir / "expert.agck");
    fs::copy_file(ctx.medium_path, dir / "medium.agck");
    write_file(dir / "run.cfg", run_cfg);
    for (std::size_t i = 0; i < commands.size(); ++i) {
      const auto log = "log" + std::to_string(i) + ".txt";
      const int code = shell("cd '" + dir.string() + "' && '" + cli + "' " + commands[i] + " >" + log + " 2>&1");
      if (code != 0) failures += " [" + commands[i].substr(0, commands[i].find(' ')) + " exit " +
                                 std::to_string(code) + "]";
    }
    trees.push_back(tree_bytes(dir));
  }
  std::string differing;
  for (const auto& [path, bytes] : trees[0]) {
    const auto it = trees[1].find(path);
    if (it == trees[1].end() || it->second != bytes) differing += " " + path;
  }
  if (trees[0].size() != trees[1].size()) differing += " (file sets differ)";

  // Format round trips.
  std::string format_errors;
  const auto ds = data::load_dataset(root / "a" / "medium.orld");
  const auto enc = data::encode_dataset(ds);
  if (data::encode_dataset(data::decode_dataset(enc, "orld")) != enc || !(data::decode_dataset(enc, "orld") == ds) ||
      enc != read_file(root / "a" / "medium.orld")) {
    format_errors += " ORLD";
  }
  const auto agent = agents::AgentCheckpoint::load(root / "a" / "run" / "final.agck");
  const auto agent_bytes = agent.encode();
  const auto agent_back = agents::AgentCheckpoint::decode(agent_bytes, "agck");
  if (agent_back.encode() != agent_bytes || !agent_back.same_parameters(agent)) format_errors += " AGCK";
  const auto wm_file = read_file(root / "a" / "wm.wmck");
  {
    BinaryReader r(wm_file, "wmck");
    BinaryWriter w;
    wm::WorldModel::read(r).write(w);
    if (w.bytes() != wm_file) format_errors += " WMCK";
  }

  // Augmentation accounting on batches with forced terminal rows.
  std::size_t batches = 0;
  std::string accounting;
  {
    BinaryReader r(wm_file, "wmck");
    const auto model = wm::WorldModel::read(r);
    const auto norm_ds = agents::NormalizedDataset::make(ds, model.norm_stats);
    Rng rng(11);
    for (double p : {0.0, 0.1, 0.25, 0.5, 0.9, 1.0}) {
      for (std::size_t b : {1u, 7u, 64u, 256u}) {
        for (double done_rate : {0.0, 0.3, 0.95}) {
          auto batch = data::sample_batch(norm_ds.dataset, b, rng);
          std::size_t non_terminal = 0;
          for (Eigen::Index i = 0; i < batch.dones.size(); ++i) {
            batch.dones[i] = rng.uniform() < done_rate ? 1.0 : 0.0;
            if (batch.dones[i] == 0.0) ++non_terminal;
          }
          const auto res = agents::augment_batch(batch, model, p, rng);
          const auto expected =
              std::min(static_cast<std::size_t>(std::floor(p * static_cast<double>(b))), non_terminal);
          bool ok = res.substituted_rows.size() == expected;
          for (auto row : res.substituted_rows) ok = ok && batch.dones[static_cast<Eigen::Index>(row)] == 0.0;
          ok = ok && res.batch.states == batch.states && res.batch.actions == batch.actions &&
               res.batch.rewards == batch.rewards && res.batch.dones == batch.dones;
          if (!ok) accounting += " p=" + fmt(p, 2) + ",B=" + std::to_string(b);
          ++batches;
        }
      }
    }
  }

  const bool pass = failures.empty() && differing.empty() && format_errors.empty() && accounting.empty();
  std::string detail = std::to_string(commands.size()) + " commands x2, " + std::to_string(trees[0].size()) +
                       " files compared, " + std::to_string(batches) + " augmentation batches checked";
  if (!failures.empty()) detail += "; command failures:" + failures;
  if (!differing.empty()) detail += "; differing:" + differing;
  if (!format_errors.empty()) detail += "; round-trip errors:" + format_errors;
  if (!accounting.empty()) detail += "; accounting errors:" + accounting;
  return {pass, detail};
}

void report(int number, const std::string& name, const Outcome& o) {
  std::cout << "criterion " << number << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
            << std::endl;
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  if (argc < 2) {
    std::cerr << "usage: wmrl_acceptance WORK_DIR [--reuse]\n";
    return 2;
  }
  Context ctx;
  ctx.work = fs::absolute(argv[1]);
  ctx.reuse = argc > 2 && std::string(argv[2]) == "--reuse";
  if (!ctx.reuse) fs::remove_all(ctx.work);
  fs::create_directories(ctx.work);
  const auto t0 = Clock::now();

  bool all = true;
  auto record = [&](int n, const std::string& name, const Outcome& o) {
    report(n, name, o);
    all = all && o.pass;
  };

  record(1, "gradient integrity", guarded(criterion_gradients));
  record(2, "KL correctness", guarded(criterion_kl));

  try {
    calibrate(ctx);
    make_datasets(ctx);
  } catch (const std::exception& e) {
    std::cout << "setup failed: " << e.what() << std::endl;
    for (int n = 3; n <= 9; ++n) record(n, "not run", {false, "setup failed"});
    return 1;
  }

  record(3, "world-model fidelity", guarded([&] { return criterion_world_model(ctx); }));
  double baseline_median = std::numeric_limits<double>::infinity();
  record(4, "baseline sanity", guarded([&] {
           auto b = criterion_baseline(ctx);
           baseline_median = b.median_steps;
           return b.outcome;
         }));

  std::optional<PairedRuns> pairs;
  try {
    pairs = run_pairs(ctx);
  } catch (const std::exception& e) {
    std::cout << "paired runs failed: " << e.what() << std::endl;
  }
  const Outcome missing{false, "paired runs did not complete"};
  record(5, "jump-start", pairs ? guarded([&] { return criterion_jump_start(*pairs, baseline_median); }) : missing);
  record(6, "augmented vs vanilla", pairs ? guarded([&] { return criterion_ordering(ctx, *pairs); }) : missing);
  record(7, "critic scale", pairs ? guarded([&] { return criterion_critic(ctx, *pairs); }) : missing);
  record(8, "ablation", pairs ? guarded([&] { return criterion_ablation(ctx, *pairs); }) : missing);
  record(9, "determinism and formats", guarded([&] { return criterion_determinism(ctx); }));

  std::cout << "acceptance " << (all ? "PASS" : "FAIL") << " in " << fmt(seconds_since(t0) / 60.0, 1) << " min"
            << std::endl;
  return all ? 0 : 1;
}
