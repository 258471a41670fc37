#include "wmrl/pipeline/grad_suites.hpp"

#include <algorithm>
#include <array>

#include "wmrl/agents/td3.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/worldmodel/world_model.hpp"

namespace wmrl::pipeline {
namespace {

using nn::Matrix;
using nn::MlpNet;
using nn::Vector;

constexpr std::size_t kHidden = 24;
constexpr std::size_t kBatch = 12;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

void corrupt(nn::MlpGradients& g) { g *= 1.1; }

struct Agent {
  agents::AgentCheckpoint ckpt;
  data::Batch batch;
};

Agent small_agent(Rng& rng) {
  agents::Hyperparams h;
  h.hidden = kHidden;
  auto spec = envs::env_spec("pendulum");
  Agent a{agents::AgentCheckpoint::create(spec, h, data::NormStats::identity(spec.obs_dim), rng), {}};
  a.batch.states = gaussian(kBatch, spec.obs_dim, rng);
  a.batch.actions = gaussian(kBatch, spec.act_dim, rng);
  a.batch.next_states = gaussian(kBatch, spec.obs_dim, rng);
  a.batch.rewards = gaussian(kBatch, 1, rng).col(0);
  a.batch.dones = Vector::Zero(kBatch);
  return a;
}

nn::GradCheckReport named(nn::GradCheckReport r, const std::string& name) {
  r.name = name;
  return r;
}

nn::GradCheckReport mlp_suite(const std::string& name, nn::OutputActivation head, Rng& rng, bool fault,
                              const nn::GradCheckOptions& opt) {
  MlpNet net(nn::make_spec(5, kHidden, 2, 3, head, 2.0), rng);
  const Matrix input = gaussian(kBatch, 5, rng);
  const Matrix target = gaussian(kBatch, 3, rng);
  const double scale = fault ? 1.1 : 1.0;
  auto loss = [&](const Matrix& out) { return 0.5 * (out - target).squaredNorm(); };
  auto loss_grad = [&](const Matrix& out) { return Matrix(scale * (out - target)); };
  return named(nn::grad_check(net, input, loss, loss_grad, opt), name);
}

nn::GradCheckReport wm_suite(Rng& rng, bool fault, const nn::GradCheckOptions& opt) {
  wm::WorldModelConfig cfg;
  cfg.hidden = kHidden;
  auto model = wm::WorldModel::create(3, 1, cfg, rng);
  const Matrix s = gaussian(kBatch, 3, rng);
  const Matrix a = gaussian(kBatch, 1, rng);
  const Matrix s2 = gaussian(kBatch, 3, rng);
  const Matrix noise = gaussian(kBatch, 3, rng);
  // The latent target is detached, so it is frozen for the numeric side too.
  const Matrix target = wm::latent_target(model, s2);
  wm::WmGradients g;
  wm::wm_loss(model, s, a, s2, noise, target, &g);
  if (fault) corrupt(g.transition);
  std::array<MlpNet*, 3> nets{&model.encoder, &model.decoder, &model.transition};
  std::array<nn::MlpGradients, 3> grads{g.encoder, g.decoder, g.transition};
  auto loss = [&] { return wm::wm_loss(model, s, a, s2, noise, target).total; };
  return named(nn::grad_check(nets, loss, grads, opt), "wm_loss");
}

nn::GradCheckReport critic_suite(Rng& rng, bool fault, const nn::GradCheckOptions& opt) {
  auto a = small_agent(rng);
  const Vector y = agents::compute_td_target(a.ckpt, a.batch, rng);
  agents::CriticGrads g;
  agents::critic_loss(a.ckpt, a.batch, y, &g);
  if (fault) corrupt(g.critic1);
  std::array<MlpNet*, 2> nets{&a.ckpt.critic1, &a.ckpt.critic2};
  std::array<nn::MlpGradients, 2> grads{g.critic1, g.critic2};
  auto loss = [&] { return agents::critic_loss(a.ckpt, a.batch, y); };
  return named(nn::grad_check(nets, loss, grads, opt), "critic_td_loss");
}

nn::GradCheckReport actor_suite(Rng& rng, bool behavior_cloning, bool fault, const nn::GradCheckOptions& opt) {
  auto a = small_agent(rng);
  nn::MlpGradients g;
  const auto at_init = behavior_cloning ? agents::td3bc_actor_loss(a.ckpt, a.batch, &g)
                                        : agents::td3_actor_loss(a.ckpt, a.batch, &g);
  if (fault) corrupt(g);
  // lambda is a constant of the update, so it stays frozen under perturbation.
  const double lambda = at_init.lambda;
  std::array<MlpNet*, 1> nets{&a.ckpt.actor};
  std::array<nn::MlpGradients, 1> grads{g};
  auto loss = [&] {
    const auto l = behavior_cloning ? agents::td3bc_actor_loss(a.ckpt, a.batch) : agents::td3_actor_loss(a.ckpt, a.batch);
    return -lambda * l.mean_q + l.bc;
  };
  return named(nn::grad_check(nets, loss, grads, opt), behavior_cloning ? "td3bc_actor_loss" : "td3_actor_loss");
}

}  // namespace

const std::vector<std::string>& grad_suite_names() {
  static const std::vector<std::string> names{"mlp", "mlp_tanh_head", "wm_loss", "critic_td_loss",
                                              "td3_actor_loss", "td3bc_actor_loss"};
  return names;
}

std::vector<nn::GradCheckReport> run_grad_suites(const GradSuiteOptions& options) {
  const auto& names = grad_suite_names();
  if (!options.inject_fault.empty()) {
    require(std::find(names.begin(), names.end(), options.inject_fault) != names.end(), ErrorKind::usage,
            "unknown grad-check suite '" + options.inject_fault + "'");
  }
  nn::GradCheckOptions opt;
  opt.tolerance = options.tolerance;
  auto fault = [&](const char* n) { return options.inject_fault == n; };
  std::vector<nn::GradCheckReport> out;
  for (const auto& name : names) {
    Rng rng(derive_seed(options.seed, name));
    if (name == "mlp") out.push_back(mlp_suite(name, nn::OutputActivation::linear, rng, fault("mlp"), opt));
    if (name == "mlp_tanh_head") {
      out.push_back(mlp_suite(name, nn::OutputActivation::tanh_scaled, rng, fault("mlp_tanh_head"), opt));
    }
    if (name == "wm_loss") out.push_back(wm_suite(rng, fault("wm_loss"), opt));
    if (name == "critic_td_loss") out.push_back(critic_suite(rng, fault("critic_td_loss"), opt));
    if (name == "td3_actor_loss") out.push_back(actor_suite(rng, false, fault("td3_actor_loss"), opt));
    if (name == "td3bc_actor_loss") out.push_back(actor_suite(rng, true, fault("td3bc_actor_loss"), opt));
  }
  return out;
}

}  // namespace wmrl::pipeline
