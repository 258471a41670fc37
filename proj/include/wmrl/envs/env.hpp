#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wmrl/core/rng.hpp"

namespace wmrl::envs {

using Vector = Eigen::VectorXd;

struct EnvSpec {
  std::string name;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  Vector action_low;
  Vector action_high;
  std::size_t max_episode_steps = 0;
  /// Most negative and most positive per-step reward the task can emit.
  double reward_min = 0.0;
  double reward_max = 0.0;

  void validate() const;
  /// Clips a finite action into the box. Throws a numeric error otherwise.
  Vector clip_action(const Vector& action) const;
};

struct StepResult {
  Vector observation;
  double reward = 0.0;
  /// True only at the time limit; neither task has failure states.
  bool done = false;
};

/// A deterministic continuous-control task. Instances are independent values.
class Env {
 public:
  virtual ~Env() = default;

  const EnvSpec& spec() const { return spec_; }
  std::size_t steps() const { return step_counter_; }

  /// Seeded initial-state draw; zeroes the step counter.
  Vector reset(std::uint64_t seed);
  StepResult step(const Vector& action);

  virtual Vector observation() const = 0;
  /// Raw internal state vector (task specific).
  virtual Vector state() const = 0;
  virtual void set_state(const Vector& state) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

 protected:
  explicit Env(EnvSpec spec);
  virtual void sample_initial_state(Rng& rng) = 0;
  /// Applies an already clipped action and returns the reward.
  virtual double advance(const Vector& action) = 0;

 private:
  EnvSpec spec_;
  std::size_t step_counter_ = 0;
};

/// Pendulum swing-up. State (theta, theta_dot), observation
/// (cos theta, sin theta, theta_dot), torque in [-2, 2], 200-step horizon.
/// theta = 0 is upright.
class Pendulum final : public Env {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;

  Pendulum();

  Vector observation() const override;
  Vector state() const override;
  void set_state(const Vector& state) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<Pendulum>(*this); }

  static double wrap_angle(double theta);

 protected:
  void sample_initial_state(Rng& rng) override;
  double advance(const Vector& action) override;

 private:
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

/// Point mass in the plane driven by an acceleration in [-1, 1]^2, rewarded
/// for staying near the origin. 100-step horizon.
class PointMass2D final : public Env {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kPositionLimit = 2.0;
  static constexpr double kVelocityLimit = 1.0;

  PointMass2D();

  Vector observation() const override;
  Vector state() const override;
  void set_state(const Vector& state) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PointMass2D>(*this); }

 protected:
  void sample_initial_state(Rng& rng) override;
  double advance(const Vector& action) override;

 private:
  Eigen::Vector2d position_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity_ = Eigen::Vector2d::Zero();
};

/// "pendulum" or "pointmass". Unknown names are config errors.
std::unique_ptr<Env> make_env(const std::string& name);
EnvSpec env_spec(const std::string& name);
std::vector<std::string> env_names();

}  // namespace wmrl::envs
