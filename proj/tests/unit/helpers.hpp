#pragma once

#include <filesystem>
#include <string>

#include "wmrl/agents/td3.hpp"
#include "wmrl/envs/reference.hpp"
#include "wmrl/nn/mlp.hpp"

namespace testutil {

using wmrl::nn::Matrix;
using wmrl::nn::Vector;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, wmrl::Rng& rng, double sd = 1.0);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

/// Small networks so training-path tests stay fast.
wmrl::agents::Hyperparams tiny_hyper();

/// Refs with a fixed random/expert pair for pendulum.
wmrl::envs::ReferenceScores pendulum_refs();

std::string slurp(const std::filesystem::path& path);

}  // namespace testutil
