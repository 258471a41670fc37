#include "wmrl/pipeline/evaluation.hpp"

#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/core/text.hpp"

namespace wmrl::pipeline {
namespace {

std::string row(const EvalRecord& r) {
  return agents::to_string(r.phase) + "," + std::to_string(r.iteration) + "," + std::to_string(r.env_steps) + "," +
         format_double(r.mean_return) + "," + format_double(r.std_return) + "," +
         format_double(r.normalized_score);
}

}  // namespace

double normalized_score(double ret, const envs::ReferenceScores& refs) {
  refs.validate();
  return 100.0 * (ret - refs.random_ref) / (refs.expert_ref - refs.random_ref);
}

EvalRecord evaluate_policy(const agents::AgentCheckpoint& ckpt, const std::string& env_name, std::size_t episodes,
                           std::uint64_t seed, const envs::ReferenceScores& refs) {
  require(ckpt.env_name == env_name, ErrorKind::usage,
          "checkpoint for " + ckpt.env_name + " evaluated on " + env_name);
  require(refs.env_name == env_name, ErrorKind::config,
          "reference scores are for " + refs.env_name + ", not " + env_name);
  const auto stats = envs::rollout_returns(env_name, ckpt.policy(), episodes, seed);
  EvalRecord r;
  r.phase = ckpt.phase;
  r.iteration = ckpt.iteration;
  r.env_steps = ckpt.env_steps;
  r.mean_return = stats.mean_return;
  r.std_return = stats.std_return;
  r.normalized_score = normalized_score(stats.mean_return, refs);
  return r;
}

std::string curve_csv(const std::vector<EvalRecord>& records) {
  std::string out = std::string(kCurveHeader) + "\n";
  for (const auto& r : records) out += row(r) + "\n";
  return out;
}

std::vector<EvalRecord> parse_curve_csv(std::string_view text, const std::string& context) {
  auto lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || trim(lines.front()) != kCurveHeader) {
    throw_error(ErrorKind::format, context + ": missing curve header");
  }
  std::vector<EvalRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split(trim(lines[i]), ',');
    const std::string where = context + ":" + std::to_string(i + 1);
    if (cols.size() != 6) throw_error(ErrorKind::format, where + ": expected 6 columns");
    EvalRecord r;
    if (cols[0] == "offline") {
      r.phase = agents::Phase::offline;
    } else if (cols[0] == "online") {
      r.phase = agents::Phase::online;
    } else {
      throw_error(ErrorKind::format, where + ": bad phase '" + cols[0] + "'");
    }
    try {
      r.iteration = parse_u64(cols[1], "iter");
      r.env_steps = parse_u64(cols[2], "env_steps");
      r.mean_return = parse_double(cols[3], "mean_return");
      r.std_return = parse_double(cols[4], "std_return");
      r.normalized_score = parse_double(cols[5], "normalized_score");
    } catch (const Error& e) {
      throw_error(ErrorKind::format, where + ": " + e.what());
    }
    out.push_back(r);
  }
  return out;
}

void save_curve(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
  write_file(path, curve_csv(records));
}

std::vector<EvalRecord> load_curve(const std::filesystem::path& path) {
  return parse_curve_csv(read_file(path), path.string());
}

std::string merge_curves(const std::vector<std::pair<std::string, std::vector<EvalRecord>>>& runs) {
  std::string out = std::string("run,") + kCurveHeader + "\n";
  for (const auto& [label, curve] : runs) {
    require(label.find(',') == std::string::npos, ErrorKind::usage, "run label may not contain ','");
    for (const auto& r : curve) out += label + "," + row(r) + "\n";
  }
  return out;
}

const EvalRecord* first_reaching(const std::vector<EvalRecord>& curve, double score) {
  for (const auto& r : curve) {
    if (r.phase == agents::Phase::online && r.normalized_score >= score) return &r;
  }
  return nullptr;
}

}  // namespace wmrl::pipeline
