#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wmrl/agents/td3.hpp"
#include "wmrl/data/dataset.hpp"
#include "wmrl/envs/reference.hpp"
#include "wmrl/pipeline/config.hpp"
#include "wmrl/pipeline/evaluation.hpp"
#include "wmrl/worldmodel/world_model.hpp"

namespace wmrl::pipeline {

using nn::Matrix;
using nn::Vector;

using EvalHook = std::function<void(const EvalRecord&)>;

struct OfflineResult {
  agents::AgentCheckpoint checkpoint;
  std::vector<EvalRecord> curve;
  std::optional<wm::WorldModel> world_model;
  std::vector<wm::WmCurvePoint> wm_curve;  // empty when the model was loaded
};

/// Norm stats, optional world model, TD3BC iterations with evaluation.
OfflineResult run_offline_phase(const ExperimentConfig& config, const data::OfflineDataset& dataset,
                                const envs::ReferenceScores& refs, const EvalHook& on_eval = {});

struct OnlineResult {
  agents::AgentCheckpoint checkpoint;
  std::vector<EvalRecord> curve;
  std::size_t iterations = 0;
};

/// Evaluations in a phase of `total` iterations: every `every`-th iteration
/// plus a final partial one.
std::size_t eval_count(std::size_t total, std::size_t every);

/// Online starting point for init_mode: copies of the pretrained nets where
/// requested, fresh ones elsewhere, targets synced, optimizer state reset.
agents::AgentCheckpoint initialize_online(const ExperimentConfig& config, const agents::AgentCheckpoint* offline,
                                          const data::NormStats& norm_stats);

/// Applies init_mode to `offline` (may be null only for init_mode=none),
/// then warm start and TD3. `norm_stats` is used only without `offline`.
OnlineResult run_online_phase(const ExperimentConfig& config, const agents::AgentCheckpoint* offline,
                              const data::NormStats& norm_stats, const envs::ReferenceScores& refs,
                              const EvalHook& on_eval = {});

struct Episode {
  std::string env_name;
  Matrix states;
  Matrix actions;
  Vector rewards;
  std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
};

/// One full episode of the deterministic actor of `policy`.
Episode record_episode(const agents::AgentCheckpoint& policy, std::uint64_t seed);

struct CriticAnalysis {
  std::vector<double> q1;
  std::vector<double> q2;
  double bound_low = 0.0;  // r_min / (1 - discount)
  double bound_high = 0.0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::size_t outside = 0;  // steps where q1 or q2 leaves the band
};

CriticAnalysis analyze_critic(const agents::AgentCheckpoint& ckpt, const Episode& episode);
std::string critic_csv(const CriticAnalysis& analysis);
std::string critic_summary(const CriticAnalysis& analysis);

struct CalibrationConfig {
  std::string env = "pendulum";
  agents::Hyperparams hyper;
  std::uint64_t seed = 0;
  std::size_t episodes = 100;
  std::size_t train_iterations = 30000;
  std::size_t warm_start_steps = 5000;
  std::size_t buffer_capacity = 1000000;
  std::size_t eval_every = 250;
  std::size_t eval_episodes = 10;
  double medium_score = 40.0;
};

struct CalibrationResult {
  envs::ReferenceScores refs;
  agents::AgentCheckpoint expert;
  std::optional<agents::AgentCheckpoint> medium;
  std::vector<EvalRecord> curve;
};

/// Trains a fully online TD3 expert, anchors the references on it and picks
/// the first evaluation checkpoint crossing `medium_score` as the medium
/// policy.
CalibrationResult calibrate_with_online_expert(const CalibrationConfig& config);

std::string sha256_hex(std::string_view bytes);

/// Tag naming the baseline a config reproduces.
std::string variant_tag(const ExperimentConfig& config);

struct ExperimentResult {
  std::filesystem::path manifest;
  std::vector<EvalRecord> curve;
  std::optional<agents::AgentCheckpoint> offline;
  agents::AgentCheckpoint final_checkpoint;
};

/// Calibration check, offline phase, online phase and artifacts under
/// config.output_dir. A failing phase still leaves a manifest of what was
/// written.
ExperimentResult run_experiment(const ExperimentConfig& config, const EvalHook& on_eval = {});

}  // namespace wmrl::pipeline
