#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmrl/nn/grad_check.hpp"

namespace wmrl::pipeline {

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  // Test hook: corrupts the analytic gradient of the named suite.
  std::string inject_fault;
};

/// Names of all suites, in run order.
const std::vector<std::string>& grad_suite_names();

/// Finite-difference checks of every trained loss on small seeded networks.
std::vector<nn::GradCheckReport> run_grad_suites(const GradSuiteOptions& options = {});

}  // namespace wmrl::pipeline
