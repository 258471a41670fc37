#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wmrl/nn/mlp.hpp"

namespace wmrl::nn {

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
  bool pass = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that entries whose true
  /// gradient is ~0 are judged on absolute error.
  double abs_floor = 1e-6;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Compares analytic gradients of a scalar loss against central finite
/// differences over every parameter of every listed network. `loss` must be a
/// deterministic function of the current parameter values (any noise frozen).
GradCheckReport grad_check(std::span<MlpNet* const> nets, const std::function<double()>& loss,
                           std::span<const MlpGradients> analytic, const GradCheckOptions& options = {});

/// Single-network form: loss(output) with dloss/doutput. Also checks the
/// gradient with respect to the input batch.
GradCheckReport grad_check(MlpNet& net, const Matrix& input,
                           const std::function<double(const Matrix&)>& loss,
                           const std::function<Matrix(const Matrix&)>& loss_grad,
                           const GradCheckOptions& options = {});

}  // namespace wmrl::nn
