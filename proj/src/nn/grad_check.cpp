#include "wmrl/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wmrl/core/error.hpp"

namespace wmrl::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Tracker {
  GradCheckReport& report;
  const GradCheckOptions& options;

  void record(double analytic, double numeric, const std::string& where) {
    double err = relative_error(analytic, numeric, options.abs_floor);
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    ++report.checked;
    if (err >= report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_parameter = where;
    }
  }
};

template <typename Param>
void check_entries(Param& param, const Param& analytic, const std::function<double()>& loss, double h,
                   Tracker& tracker, const std::string& where) {
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    double& x = param.data()[i];
    const double saved = x;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    tracker.record(analytic.data()[i], (up - down) / (2.0 * h), where + "[" + std::to_string(i) + "]");
  }
}

}  // namespace

GradCheckReport grad_check(std::span<MlpNet* const> nets, const std::function<double()>& loss,
                           std::span<const MlpGradients> analytic, const GradCheckOptions& options) {
  require(nets.size() == analytic.size(), ErrorKind::usage, "one analytic gradient per network required");
  GradCheckReport report;
  Tracker tracker{report, options};
  for (std::size_t n = 0; n < nets.size(); ++n) {
    MlpNet& net = *nets[n];
    const auto& g = analytic[n];
    require(g.weights.size() == net.layer_count(), ErrorKind::shape, "analytic gradient layer count mismatch");
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      const std::string base = "net" + std::to_string(n) + ".layers[" + std::to_string(l) + "]";
      check_entries(net.mutable_weights(l), g.weights[l], loss, options.step, tracker, base + ".weights");
      check_entries(net.mutable_biases(l), g.biases[l], loss, options.step, tracker, base + ".biases");
    }
  }
  report.pass = std::isfinite(report.max_rel_error) && report.max_rel_error < options.tolerance;
  return report;
}

GradCheckReport grad_check(MlpNet& net, const Matrix& input, const std::function<double(const Matrix&)>& loss,
                           const std::function<Matrix(const Matrix&)>& loss_grad,
                           const GradCheckOptions& options) {
  auto fwd = net.forward(input);
  auto back = net.backward(fwd.cache, loss_grad(fwd.output));
  Matrix x = input;
  auto eval = [&] { return loss(net.predict(x)); };
  MlpNet* nets[] = {&net};
  auto report = grad_check(std::span<MlpNet* const>(nets), eval, std::span<const MlpGradients>(&back.params, 1),
                           options);
  Tracker tracker{report, options};
  check_entries(x, back.input_grad, eval, options.step, tracker, "input");
  report.pass = std::isfinite(report.max_rel_error) && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace wmrl::nn
