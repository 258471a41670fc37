#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wmrl/agents/td3.hpp"
#include "wmrl/envs/reference.hpp"

namespace wmrl::pipeline {

struct EvalRecord {
  agents::Phase phase = agents::Phase::offline;
  std::uint64_t iteration = 0;
  std::uint64_t env_steps = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double normalized_score = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

/// 100 * (ret - random_ref) / (expert_ref - random_ref).
double normalized_score(double ret, const envs::ReferenceScores& refs);

/// Deterministic actor over `episodes` seeded episodes. Phase, iteration and
/// env_steps are taken from the checkpoint.
EvalRecord evaluate_policy(const agents::AgentCheckpoint& ckpt, const std::string& env_name, std::size_t episodes,
                           std::uint64_t seed, const envs::ReferenceScores& refs);

inline constexpr const char* kCurveHeader = "phase,iter,env_steps,mean_return,std_return,normalized_score";

std::string curve_csv(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> parse_curve_csv(std::string_view text, const std::string& context);
void save_curve(const std::vector<EvalRecord>& records, const std::filesystem::path& path);
std::vector<EvalRecord> load_curve(const std::filesystem::path& path);

/// Long-format CSV of several labelled curves: `run,` followed by the curve
/// columns.
std::string merge_curves(const std::vector<std::pair<std::string, std::vector<EvalRecord>>>& runs);

/// First online record reaching `score`, if any.
const EvalRecord* first_reaching(const std::vector<EvalRecord>& curve, double score);

}  // namespace wmrl::pipeline
