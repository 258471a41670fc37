#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "wmrl/agents/online.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/data/generate.hpp"
#include "wmrl/pipeline/experiment.hpp"
#include "wmrl/pipeline/grad_suites.hpp"

using namespace wmrl;
using namespace wmrl::pipeline;

namespace {

// Small end-to-end setup on pendulum: refs file, random dataset, tiny nets.
struct Fixture {
  std::filesystem::path dir;
  ExperimentConfig cfg;

  explicit Fixture(const std::string& name) : dir(testutil::temp_dir(name)) {
    envs::save_references(testutil::pendulum_refs(), dir / "refs.txt");
    data::save_dataset(data::generate_dataset("pendulum", data::Flavor::random, 2000, 1), dir / "data.orld");
    cfg.refs = (dir / "refs.txt").string();
    cfg.dataset = (dir / "data.orld").string();
    cfg.output_dir = (dir / "out").string();
    cfg.seed = 5;
    cfg.hyper = testutil::tiny_hyper();
    cfg.offline_iterations = 30;
    cfg.online_iterations = 40;
    cfg.eval_every = 20;
    cfg.eval_episodes = 1;
    cfg.warm_start_steps = 50;
    cfg.buffer_capacity = 1000;
    cfg.wm.hidden = 16;
    cfg.wm.hidden_layers = 1;
    cfg.wm_iterations = 20;
    cfg.wm_batch_size = 32;
  }
};

std::map<std::string, std::string> manifest_fields(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#' || line.rfind("artifact=", 0) == 0) continue;
    const auto eq = line.find('=');
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::vector<std::string> manifest_artifacts(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("artifact=", 0) == 0) out.push_back(line);
  }
  return out;
}

}  // namespace

TEST_CASE("normalized score: anchors, midpoint, affine invariance, degenerate refs") {
  envs::ReferenceScores refs{"pendulum", -1200, -200, 10, 0};
  CHECK(normalized_score(-1200, refs) == 0.0);
  CHECK(normalized_score(-200, refs) == 100.0);
  CHECK(normalized_score(-700, refs) == 50.0);
  CHECK(normalized_score(0, refs) == doctest::Approx(120.0));
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double shift = rng.uniform(-1e3, 1e3), ret = rng.uniform(-2000, 100);
    auto moved = refs;
    moved.random_ref += shift;
    moved.expert_ref += shift;
    CHECK(normalized_score(ret + shift, moved) == doctest::Approx(normalized_score(ret, refs)).epsilon(1e-9));
  }
  refs.expert_ref = refs.random_ref;
  try {
    normalized_score(0, refs);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("evaluate_policy: random-weights actor scores near zero, seeds reproduce, one episode has zero std") {
  const auto spec = envs::env_spec("pendulum");
  const auto random = envs::rollout_returns("pendulum", envs::uniform_random_policy(spec), 50, 7);
  envs::ReferenceScores refs{"pendulum", random.mean_return, -150.0, 50, 7};
  const auto ckpt = agents::fresh_agent("pendulum", agents::Hyperparams{}, data::NormStats::identity(3), 2);
  const auto r = evaluate_policy(ckpt, "pendulum", 50, 7, refs);
  CHECK(std::abs(r.normalized_score) < 15.0);
  CHECK(evaluate_policy(ckpt, "pendulum", 3, 9, refs) == evaluate_policy(ckpt, "pendulum", 3, 9, refs));
  CHECK(evaluate_policy(ckpt, "pendulum", 1, 9, refs).std_return == 0.0);
}

TEST_CASE("curve csv: header, round trip, merge and first_reaching") {
  std::vector<EvalRecord> curve{{agents::Phase::offline, 5, 0, -800.5, 10.25, 37.5},
                                {agents::Phase::online, 5, 105, -300.0, 1.0, 85.0},
                                {agents::Phase::online, 10, 110, -150.0, 0.5, 100.0}};
  const auto text = curve_csv(curve);
  CHECK(text.rfind(std::string(kCurveHeader) + "\n", 0) == 0);
  CHECK(parse_curve_csv(text, "t") == curve);
  const auto merged = merge_curves({{"a", curve}, {"b", curve}});
  CHECK(merged.rfind(std::string("run,") + kCurveHeader, 0) == 0);
  CHECK(std::count(merged.begin(), merged.end(), '\n') == 7);
  REQUIRE(first_reaching(curve, 90.0) != nullptr);
  CHECK(first_reaching(curve, 90.0)->iteration == 10);
  CHECK(first_reaching(curve, 30.0)->phase == agents::Phase::online);
  CHECK(first_reaching(curve, 101.0) == nullptr);
  CHECK_THROWS_AS(parse_curve_csv("phase,iter\n", "bad"), Error);
}

TEST_CASE("eval_count: paper and desk budgets") {
  CHECK(eval_count(200000, 5000) == 40);
  CHECK(eval_count(500000, 5000) == 100);
  CHECK(eval_count(12, 5) == 3);
  CHECK(eval_count(0, 5) == 0);
}

TEST_CASE("config: defaults, parse, overrides, unknown keys, round trip") {
  ExperimentConfig c;
  CHECK(c.offline_iterations == 50000);
  CHECK(c.online_iterations == 100000);
  CHECK(c.eval_every == 5000);
  CHECK(c.eval_episodes == 10);
  CHECK(c.init_mode == InitMode::both);

  auto p = ExperimentConfig::parse("# comment\nseed = 3\ninit_mode=actor-only\naugment=false\nbc_weight=1.5\n", "t");
  CHECK(p.seed == 3);
  CHECK(p.init_mode == InitMode::actor_only);
  CHECK_FALSE(p.augment);
  CHECK(p.hyper.bc_weight == 1.5);
  CHECK(p.get("init_mode") == "actor_only");

  try {
    ExperimentConfig::parse("sede=3\n", "t");
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("sede") != std::string::npos);
  }
  CHECK_THROWS_AS(ExperimentConfig::parse("seed=abc\n", "t"), Error);
  CHECK_THROWS_AS(ExperimentConfig::parse("init_mode=half\n", "t"), Error);

  p.set("stop_score", "90");
  p.set("wm_kl_direction", "prior_to_posterior");
  const auto back = ExperimentConfig::parse(p.to_text(), "echo");
  CHECK(back.to_text() == p.to_text());
  CHECK(back.stop_score == 90.0);
  for (const auto& key : ExperimentConfig::keys()) CHECK(back.get(key) == p.get(key));
}

TEST_CASE("config: validation rules") {
  ExperimentConfig c;
  c.refs = "r";
  CHECK_THROWS_AS(c.validate(), Error);  // augment needs a dataset
  c.init_mode = InitMode::none;
  c.augment = false;
  c.offline_iterations = 0;
  c.validate();
  c.warm_start_steps = c.buffer_capacity + 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c.warm_start_steps = 10;
  c.env = "cartpole";
  CHECK_THROWS_AS(c.validate(), Error);
  c.env = "pendulum";
  c.refs.clear();
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("variant tags") {
  ExperimentConfig c;
  CHECK(variant_tag(c) == "augmented_td3bc_td3");
  c.augment = false;
  CHECK(variant_tag(c) == "vanilla_td3bc_td3");
  c.init_mode = InitMode::critic_only;
  CHECK(variant_tag(c) == "vanilla_td3bc_td3_init_critic_only");
  c.init_mode = InitMode::none;
  c.offline_iterations = 0;
  CHECK(variant_tag(c) == "online_td3");
}

TEST_CASE("sha256 test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("initialize_online: each mode copies exactly the requested networks") {
  const auto norm = data::NormStats::identity(3);
  ExperimentConfig cfg;
  cfg.hyper = testutil::tiny_hyper();
  cfg.seed = 4;
  auto offline = agents::fresh_agent("pendulum", cfg.hyper, norm, 99);
  offline.target_actor.mutable_biases(0)[0] += 1.0;  // stale targets must be re-synced
  offline.actor.mutable_adam_state().step = 7;
  const auto fresh = agents::fresh_agent("pendulum", cfg.hyper, norm, cfg.seed);

  cfg.init_mode = InitMode::both;
  auto both = initialize_online(cfg, &offline, norm);
  CHECK(both.actor.same_parameters(offline.actor));
  CHECK(both.critic1.same_parameters(offline.critic1));
  CHECK(both.target_actor.same_parameters(offline.actor));
  CHECK(both.actor.adam_state().step == 0);

  cfg.init_mode = InitMode::actor_only;
  auto actor = initialize_online(cfg, &offline, norm);
  CHECK(actor.actor.same_parameters(offline.actor));
  CHECK(actor.target_actor.same_parameters(offline.actor));
  CHECK(actor.critic1.same_parameters(fresh.critic1));
  CHECK(actor.target_critic2.same_parameters(fresh.critic2));

  cfg.init_mode = InitMode::critic_only;
  auto critic = initialize_online(cfg, &offline, norm);
  CHECK(critic.actor.same_parameters(fresh.actor));
  CHECK(critic.critic1.same_parameters(offline.critic1));
  CHECK(critic.critic2.same_parameters(offline.critic2));
  CHECK(critic.target_critic1.same_parameters(offline.critic1));

  cfg.init_mode = InitMode::none;
  CHECK(initialize_online(cfg, nullptr, norm).same_parameters(fresh));
  cfg.init_mode = InitMode::actor_only;
  try {
    initialize_online(cfg, nullptr, norm);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("offline phase: eval cadence, zero env steps, zero iterations keep the fresh init") {
  Fixture f("offline_phase");
  f.cfg.offline_iterations = 50;
  const auto ds = data::load_dataset(f.cfg.dataset);
  const auto refs = testutil::pendulum_refs();
  const auto r = run_offline_phase(f.cfg, ds, refs);
  REQUIRE(r.curve.size() == eval_count(50, 20));
  CHECK(r.curve[0].iteration == 20);
  CHECK(r.curve[2].iteration == 50);
  for (const auto& e : r.curve) {
    CHECK(e.phase == agents::Phase::offline);
    CHECK(e.env_steps == 0);
  }
  CHECK(r.world_model.has_value());
  CHECK(r.wm_curve.size() == 2);

  f.cfg.offline_iterations = 0;
  f.cfg.augment = false;
  const auto zero = run_offline_phase(f.cfg, ds, refs);
  CHECK(zero.curve.empty());
  CHECK_FALSE(zero.world_model.has_value());
  CHECK(zero.checkpoint.same_parameters(
      agents::fresh_agent("pendulum", f.cfg.hyper, data::compute_norm_stats(ds), f.cfg.seed)));
}

TEST_CASE("online-only pipeline is bit-identical to the standalone TD3 loop") {
  Fixture f("online_only");
  f.cfg.init_mode = InitMode::none;
  f.cfg.augment = false;
  f.cfg.offline_iterations = 0;
  f.cfg.dataset.clear();
  const auto result = run_experiment(f.cfg);

  auto ckpt = agents::fresh_agent("pendulum", f.cfg.hyper, data::NormStats::identity(3), f.cfg.seed);
  agents::run_online_loop(ckpt, {f.cfg.seed, 40, 50, 1000});
  CHECK(result.final_checkpoint.encode() == ckpt.encode());
  CHECK(result.final_checkpoint.env_steps == 90);
  REQUIRE(result.curve.size() == 2);
  CHECK(result.curve[0].env_steps == 70);
  CHECK(result.curve[1].env_steps == 90);
  const auto fields = manifest_fields(result.manifest);
  CHECK(fields.at("variant") == "online_td3");
  CHECK(fields.at("env_steps") == "90");
  CHECK(fields.at("status") == "complete");
}

TEST_CASE("run_experiment: artifacts, digests, monotone curve and bit-identical rerun") {
  Fixture f("full_run");
  auto first = run_experiment(f.cfg);
  const auto fields = manifest_fields(first.manifest);
  CHECK(fields.at("variant") == "augmented_td3bc_td3");
  CHECK(fields.at("env_steps") == "90");
  CHECK(fields.at("online_iterations_run") == "40");

  const auto arts = manifest_artifacts(first.manifest);
  std::vector<std::string> names;
  for (const auto& line : arts) {
    const auto name = line.substr(9, line.find(' ') - 9);
    names.push_back(name);
    const auto bytes = testutil::slurp(std::filesystem::path(f.cfg.output_dir) / name);
    CHECK(line.find("sha256=" + sha256_hex(bytes)) != std::string::npos);
    CHECK(line.find("bytes=" + std::to_string(bytes.size())) != std::string::npos);
  }
  for (const char* expected : {"resolved_config.txt", "world_model.wmck", "wm_loss.csv", "offline.agck",
                               "final.agck", "curve.csv"}) {
    CHECK(std::find(names.begin(), names.end(), expected) != names.end());
  }

  const auto curve = load_curve(std::filesystem::path(f.cfg.output_dir) / "curve.csv");
  CHECK(curve == first.curve);
  REQUIRE(curve.size() == 4);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(std::pair(int(curve[i - 1].phase), curve[i - 1].iteration) < std::pair(int(curve[i].phase), curve[i].iteration));
    CHECK(curve[i - 1].env_steps <= curve[i].env_steps);
  }

  const auto bytes1 = testutil::slurp(first.manifest);
  std::filesystem::remove_all(f.cfg.output_dir);
  auto second = run_experiment(f.cfg);
  CHECK(testutil::slurp(second.manifest) == bytes1);
}

TEST_CASE("run_experiment: init mode and stop score are honoured, failures leave a manifest") {
  Fixture f("modes");
  f.cfg.augment = false;
  f.cfg.init_mode = InitMode::actor_only;
  f.cfg.stop_score = -1e9;
  const auto r = run_experiment(f.cfg);
  const auto fields = manifest_fields(r.manifest);
  CHECK(fields.at("variant") == "vanilla_td3bc_td3_init_actor_only");
  CHECK(fields.at("init_mode") == "actor_only");
  CHECK(fields.at("online_iterations_run") == "20");
  CHECK(r.final_checkpoint.env_steps == 70);

  f.cfg.output_dir = (f.dir / "broken").string();
  f.cfg.dataset = (f.dir / "missing.orld").string();
  try {
    run_experiment(f.cfg);
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
  const auto failed = manifest_fields(f.dir / "broken" / "manifest.txt");
  CHECK(failed.at("status") == "failed");
  CHECK(failed.at("error").find("missing.orld") != std::string::npos);
}

TEST_CASE("run_experiment: offline checkpoint and world model can be reused") {
  Fixture f("reuse");
  const auto base = run_experiment(f.cfg);
  const auto out = std::filesystem::path(f.cfg.output_dir);
  auto reuse = f.cfg;
  reuse.output_dir = (f.dir / "again").string();
  reuse.offline_checkpoint = (out / "offline.agck").string();
  const auto again = run_experiment(reuse);
  CHECK(again.final_checkpoint.encode() == base.final_checkpoint.encode());

  auto shared = f.cfg;
  shared.output_dir = (f.dir / "shared").string();
  shared.wm_checkpoint = (out / "world_model.wmck").string();
  const auto with_wm = run_experiment(shared);
  CHECK(with_wm.final_checkpoint.encode() == base.final_checkpoint.encode());
  CHECK_FALSE(std::filesystem::exists(f.dir / "shared" / "world_model.wmck"));
}

TEST_CASE("critic analysis: zero critic, band, length, csv") {
  auto ckpt = agents::fresh_agent("pendulum", testutil::tiny_hyper(), data::NormStats::identity(3), 1);
  const auto episode = record_episode(ckpt, 3);
  CHECK(episode.size() == envs::env_spec("pendulum").max_episode_steps);
  ckpt.critic1.set_zero();
  ckpt.critic2.set_zero();
  const auto a = analyze_critic(ckpt, episode);
  CHECK(a.q1.size() == episode.size());
  CHECK(std::all_of(a.q1.begin(), a.q1.end(), [](double q) { return q == 0.0; }));
  const auto spec = envs::env_spec("pendulum");
  CHECK(a.bound_low == doctest::Approx(spec.reward_min / 0.01));
  CHECK(a.bound_high == 0.0);
  CHECK(a.outside == 0);
  const auto csv = critic_csv(a);
  CHECK(csv.rfind("step,q1,q2,bound_low,bound_high\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(episode.size() + 1));
  CHECK(critic_summary(a).find("flagged=false") != std::string::npos);

  ckpt.critic1.mutable_biases(ckpt.critic1.layer_count() - 1)[0] = 1.0;
  const auto high = analyze_critic(ckpt, episode);
  CHECK(high.outside == episode.size());
  CHECK(critic_summary(high).find("flagged=true") != std::string::npos);

  auto other = agents::fresh_agent("pointmass", testutil::tiny_hyper(), data::NormStats::identity(4), 1);
  try {
    analyze_critic(other, episode);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
  }
}

TEST_CASE("grad suites pass and an injected fault is caught") {
  const auto ok = run_grad_suites({});
  CHECK(ok.size() == grad_suite_names().size());
  for (const auto& r : ok) CHECK_MESSAGE(r.pass, r.name << " " << r.max_rel_error);
  GradSuiteOptions bad;
  bad.inject_fault = "wm_loss";
  for (const auto& r : run_grad_suites(bad)) CHECK(r.pass == (r.name != "wm_loss"));
}
