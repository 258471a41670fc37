#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/rng.hpp"

namespace wmrl::nn {

/// Batch-major storage: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

enum class HiddenActivation : std::uint8_t { relu = 0 };
enum class OutputActivation : std::uint8_t { linear = 0, tanh_scaled = 1 };

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  OutputActivation output = OutputActivation::linear;
  double output_scale = 1.0;  // used by tanh_scaled only

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  bool operator==(const MlpSpec&) const = default;
};

/// `hidden_layers` hidden layers of width `hidden` between in and out.
MlpSpec make_spec(std::size_t in, std::size_t hidden, std::size_t hidden_layers, std::size_t out,
                  OutputActivation output = OutputActivation::linear, double output_scale = 1.0);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Per-parameter gradients; shapes mirror the owning network.
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;

  static MlpGradients zeros_like(const MlpSpec& spec);
  MlpGradients& operator+=(const MlpGradients& other);
  MlpGradients& operator*=(double factor);
  double max_abs() const;
};

/// Activations recorded by a forward pass. Tied to the (network, parameter
/// version) that produced it; using it after the parameters change is an error.
struct ForwardCache {
  std::uint64_t net_uid = 0;
  std::uint64_t net_version = 0;
  std::vector<Matrix> layer_inputs;  // layer_inputs[0] is the network input
  Matrix output;
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

struct BackwardResult {
  MlpGradients params;  // empty when parameter gradients were not requested
  Matrix input_grad;
};

struct AdamState {
  std::vector<Matrix> m_weights, v_weights;
  std::vector<RowVector> m_biases, v_biases;
  std::uint64_t step = 0;
};

/// Dense multilayer perceptron with ReLU hidden layers and a linear or scaled
/// tanh head. Layer i computes x * W_i + b_i with W_i of shape in x out.
class MlpNet {
 public:
  /// All parameters zero.
  explicit MlpNet(MlpSpec spec);
  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  MlpNet(MlpSpec spec, Rng& rng);

  MlpNet(const MlpNet& other);
  MlpNet& operator=(const MlpNet& other);
  MlpNet(MlpNet&& other) noexcept = default;
  MlpNet& operator=(MlpNet&& other) noexcept = default;

  const MlpSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t input_dim() const { return spec_.input_dim(); }
  std::size_t output_dim() const { return spec_.output_dim(); }
  std::size_t parameter_count() const;

  const Matrix& weights(std::size_t layer) const { return weights_.at(layer); }
  const RowVector& biases(std::size_t layer) const { return biases_.at(layer); }
  /// Mutable access invalidates outstanding forward caches.
  Matrix& mutable_weights(std::size_t layer);
  RowVector& mutable_biases(std::size_t layer);
  void set_zero();

  ForwardResult forward(const Matrix& input) const;
  /// Forward without recording a cache.
  Matrix predict(const Matrix& input) const;

  /// Exact gradients of sum(output .* output_grad) with respect to parameters
  /// (when `param_grads`) and the input.
  BackwardResult backward(const ForwardCache& cache, const Matrix& output_grad,
                          bool param_grads = true) const;

  /// Bias-corrected Adam. Throws a numeric error naming the parameter when a
  /// gradient entry is not finite; parameters are untouched in that case.
  void adam_step(const MlpGradients& grads, const AdamConfig& config);

  /// this <- tau * source + (1 - tau) * this, element-wise.
  void polyak_update(const MlpNet& source, double tau);

  const AdamState& adam_state() const { return adam_; }
  AdamState& mutable_adam_state() { return adam_; }
  void reset_adam_state();

  bool same_parameters(const MlpNet& other) const;

  void write(BinaryWriter& out, bool include_adam) const;
  static MlpNet read(BinaryReader& in);
  void save(const std::filesystem::path& path, bool include_adam = true) const;
  static MlpNet load(const std::filesystem::path& path);

 private:
  void check_input(const Matrix& input) const;
  void touch();

  MlpSpec spec_;
  std::vector<Matrix> weights_;
  std::vector<RowVector> biases_;
  AdamState adam_;
  std::uint64_t uid_;
  std::uint64_t version_ = 0;
};

}  // namespace wmrl::nn
