#include "wmrl/envs/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wmrl/core/error.hpp"

namespace wmrl::envs {

void EnvSpec::validate() const {
  require(obs_dim >= 1 && act_dim >= 1, ErrorKind::config, "env dims must be >= 1");
  require(static_cast<std::size_t>(action_low.size()) == act_dim &&
              static_cast<std::size_t>(action_high.size()) == act_dim,
          ErrorKind::config, "action bounds must have act_dim entries");
  require((action_low.array() < action_high.array()).all(), ErrorKind::config,
          "action_low must be below action_high");
  require(max_episode_steps >= 1, ErrorKind::config, "max_episode_steps must be >= 1");
}

Vector EnvSpec::clip_action(const Vector& action) const {
  require(static_cast<std::size_t>(action.size()) == act_dim, ErrorKind::shape,
          name + ": action has " + std::to_string(action.size()) + " entries, expected " +
              std::to_string(act_dim));
  require(action.allFinite(), ErrorKind::numeric, name + ": non-finite action");
  return action.cwiseMax(action_low).cwiseMin(action_high);
}

Env::Env(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Vector Env::reset(std::uint64_t seed) {
  Rng rng(seed);
  sample_initial_state(rng);
  step_counter_ = 0;
  return observation();
}

StepResult Env::step(const Vector& action) {
  const Vector clipped = spec_.clip_action(action);
  StepResult result;
  result.reward = advance(clipped);
  ++step_counter_;
  result.observation = observation();
  result.done = step_counter_ >= spec_.max_episode_steps;
  return result;
}

// ---------------------------------------------------------------------------

namespace {

EnvSpec pendulum_spec() {
  EnvSpec s;
  s.name = "pendulum";
  s.obs_dim = 3;
  s.act_dim = 1;
  s.action_low = Vector::Constant(1, -Pendulum::kMaxTorque);
  s.action_high = Vector::Constant(1, Pendulum::kMaxTorque);
  s.max_episode_steps = 200;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  s.reward_min = -(pi2 + 0.1 * Pendulum::kMaxSpeed * Pendulum::kMaxSpeed +
                   0.001 * Pendulum::kMaxTorque * Pendulum::kMaxTorque);
  s.reward_max = 0.0;
  return s;
}

EnvSpec pointmass_spec() {
  EnvSpec s;
  s.name = "pointmass";
  s.obs_dim = 4;
  s.act_dim = 2;
  s.action_low = Vector::Constant(2, -1.0);
  s.action_high = Vector::Constant(2, 1.0);
  s.max_episode_steps = 100;
  s.reward_min = -(2.0 * std::numbers::sqrt2 + 0.001 * 2.0);
  s.reward_max = 0.0;
  return s;
}

}  // namespace

Pendulum::Pendulum() : Env(pendulum_spec()) {}

double Pendulum::wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  return w - std::numbers::pi;
}

Vector Pendulum::observation() const {
  Vector obs(3);
  obs << std::cos(theta_), std::sin(theta_), theta_dot_;
  return obs;
}

Vector Pendulum::state() const {
  Vector s(2);
  s << theta_, theta_dot_;
  return s;
}

void Pendulum::set_state(const Vector& state) {
  require(state.size() == 2 && state.allFinite(), ErrorKind::usage, "pendulum state is (theta, theta_dot)");
  theta_ = state[0];
  theta_dot_ = std::clamp(state[1], -kMaxSpeed, kMaxSpeed);
}

void Pendulum::sample_initial_state(Rng& rng) {
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
}

double Pendulum::advance(const Vector& action) {
  const double u = action[0];
  const double th = wrap_angle(theta_);
  const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;
  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) + 3.0 * u / (kMass * kLength * kLength);
  theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
  theta_ = theta_ + theta_dot_ * kDt;
  return -cost;
}

PointMass2D::PointMass2D() : Env(pointmass_spec()) {}

Vector PointMass2D::observation() const {
  Vector obs(4);
  obs << position_, velocity_;
  return obs;
}

Vector PointMass2D::state() const { return observation(); }

void PointMass2D::set_state(const Vector& state) {
  require(state.size() == 4 && state.allFinite(), ErrorKind::usage, "pointmass state is (px, py, vx, vy)");
  position_ = state.head<2>().cwiseMax(-kPositionLimit).cwiseMin(kPositionLimit);
  velocity_ = state.tail<2>().cwiseMax(-kVelocityLimit).cwiseMin(kVelocityLimit);
}

void PointMass2D::sample_initial_state(Rng& rng) {
  position_[0] = rng.uniform(-1.0, 1.0);
  position_[1] = rng.uniform(-1.0, 1.0);
  velocity_.setZero();
}

double PointMass2D::advance(const Vector& action) {
  const Eigen::Vector2d a = action.head<2>();
  velocity_ = (velocity_ + a * kDt).cwiseMax(-kVelocityLimit).cwiseMin(kVelocityLimit);
  position_ = (position_ + velocity_ * kDt).cwiseMax(-kPositionLimit).cwiseMin(kPositionLimit);
  return -position_.norm() - 0.001 * a.squaredNorm();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "pointmass") return std::make_unique<PointMass2D>();
  throw_error(ErrorKind::config, "unknown env '" + name + "' (known: pendulum, pointmass)");
}

EnvSpec env_spec(const std::string& name) { return make_env(name)->spec(); }

std::vector<std::string> env_names() { return {"pendulum", "pointmass"}; }

}  // namespace wmrl::envs
