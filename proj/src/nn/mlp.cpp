#include "wmrl/nn/mlp.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "wmrl/core/error.hpp"

namespace wmrl::nn {
namespace {

std::atomic<std::uint64_t> next_uid{1};

std::uint64_t fresh_uid() { return next_uid.fetch_add(1, std::memory_order_relaxed); }

constexpr std::string_view kMagic = "WMNN";
constexpr std::uint32_t kVersion = 1;

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

MlpSpec make_spec(std::size_t in, std::size_t hidden, std::size_t hidden_layers, std::size_t out,
                  OutputActivation output, double output_scale) {
  MlpSpec spec;
  spec.layer_sizes.push_back(in);
  for (std::size_t i = 0; i < hidden_layers; ++i) spec.layer_sizes.push_back(hidden);
  spec.layer_sizes.push_back(out);
  spec.output = output;
  spec.output_scale = output_scale;
  return spec;
}

void AdamConfig::validate() const {
  require(learning_rate > 0.0, ErrorKind::config, "adam learning_rate must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0, ErrorKind::config, "adam beta1 must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, ErrorKind::config, "adam beta2 must be in [0, 1)");
  require(epsilon > 0.0, ErrorKind::config, "adam epsilon must be > 0");
}

MlpGradients MlpGradients::zeros_like(const MlpSpec& spec) {
  MlpGradients g;
  for (std::size_t i = 0; i < spec.layer_count(); ++i) {
    const auto in = static_cast<Eigen::Index>(spec.layer_sizes[i]);
    const auto out = static_cast<Eigen::Index>(spec.layer_sizes[i + 1]);
    g.weights.push_back(Matrix::Zero(in, out));
    g.biases.push_back(RowVector::Zero(out));
  }
  return g;
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  require(weights.size() == other.weights.size(), ErrorKind::shape, "gradient layer count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
  return *this;
}

MlpGradients& MlpGradients::operator*=(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
  return *this;
}

double MlpGradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weights) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const auto& b : biases) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

MlpNet::MlpNet(MlpSpec spec) : spec_(std::move(spec)), uid_(fresh_uid()) {
  require(spec_.layer_sizes.size() >= 2, ErrorKind::shape, "an MLP needs at least input and output sizes");
  for (auto s : spec_.layer_sizes) require(s > 0, ErrorKind::shape, "layer sizes must be positive");
  if (spec_.output == OutputActivation::tanh_scaled) {
    require(spec_.output_scale > 0.0 && std::isfinite(spec_.output_scale), ErrorKind::config,
            "tanh output scale must be positive");
  }
  auto zeros = MlpGradients::zeros_like(spec_);
  weights_ = zeros.weights;
  biases_ = zeros.biases;
  reset_adam_state();
}

MlpNet::MlpNet(MlpSpec spec, Rng& rng) : MlpNet(std::move(spec)) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(weights_[l].rows()));
    for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = rng.uniform(-bound, bound);
  }
}

MlpNet::MlpNet(const MlpNet& other)
    : spec_(other.spec_),
      weights_(other.weights_),
      biases_(other.biases_),
      adam_(other.adam_),
      uid_(fresh_uid()) {}

MlpNet& MlpNet::operator=(const MlpNet& other) {
  if (this != &other) {
    spec_ = other.spec_;
    weights_ = other.weights_;
    biases_ = other.biases_;
    adam_ = other.adam_;
    uid_ = fresh_uid();
    version_ = 0;
  }
  return *this;
}

std::size_t MlpNet::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

void MlpNet::touch() { ++version_; }

Matrix& MlpNet::mutable_weights(std::size_t layer) {
  touch();
  return weights_.at(layer);
}

RowVector& MlpNet::mutable_biases(std::size_t layer) {
  touch();
  return biases_.at(layer);
}

void MlpNet::set_zero() {
  touch();
  for (auto& w : weights_) w.setZero();
  for (auto& b : biases_) b.setZero();
}

void MlpNet::reset_adam_state() {
  auto zeros = MlpGradients::zeros_like(spec_);
  adam_.m_weights = zeros.weights;
  adam_.v_weights = zeros.weights;
  adam_.m_biases = zeros.biases;
  adam_.v_biases = zeros.biases;
  adam_.step = 0;
}

void MlpNet::check_input(const Matrix& input) const {
  if (static_cast<std::size_t>(input.cols()) != input_dim()) {
    throw_error(ErrorKind::shape, "MLP input has " + std::to_string(input.cols()) +
                                      " columns, network expects " + std::to_string(input_dim()));
  }
  if (!input.allFinite()) throw_error(ErrorKind::numeric, "MLP input contains non-finite values");
}

ForwardResult MlpNet::forward(const Matrix& input) const {
  check_input(input);
  ForwardResult result;
  auto& cache = result.cache;
  cache.net_uid = uid_;
  cache.net_version = version_;
  cache.layer_inputs.reserve(weights_.size());
  cache.layer_inputs.push_back(input);
  const std::size_t last = weights_.size() - 1;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = cache.layer_inputs.back() * weights_[l];
    z.rowwise() += biases_[l];
    if (l < last) {
      cache.layer_inputs.push_back(z.cwiseMax(0.0));
    } else if (spec_.output == OutputActivation::tanh_scaled) {
      cache.output = spec_.output_scale * z.array().tanh();
    } else {
      cache.output = std::move(z);
    }
  }
  result.output = cache.output;
  return result;
}

Matrix MlpNet::predict(const Matrix& input) const {
  check_input(input);
  Matrix x = input;
  const std::size_t last = weights_.size() - 1;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = x * weights_[l];
    z.rowwise() += biases_[l];
    if (l < last) {
      x = z.cwiseMax(0.0);
    } else if (spec_.output == OutputActivation::tanh_scaled) {
      x = spec_.output_scale * z.array().tanh();
    } else {
      x = std::move(z);
    }
  }
  return x;
}

BackwardResult MlpNet::backward(const ForwardCache& cache, const Matrix& output_grad,
                                bool param_grads) const {
  if (cache.net_uid != uid_ || cache.net_version != version_) {
    throw_error(ErrorKind::usage, "forward cache is stale or belongs to a different network");
  }
  if (cache.layer_inputs.size() != weights_.size()) {
    throw_error(ErrorKind::usage, "forward cache layer count does not match the network");
  }
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols()) {
    throw_error(ErrorKind::shape, "output gradient is " + shape_str(output_grad.rows(), output_grad.cols()) +
                                      ", forward output was " +
                                      shape_str(cache.output.rows(), cache.output.cols()));
  }

  BackwardResult result;
  if (param_grads) {
    result.params.weights.resize(weights_.size());
    result.params.biases.resize(weights_.size());
  }

  // Gradient with respect to the pre-activation of the current layer.
  Matrix delta;
  if (spec_.output == OutputActivation::tanh_scaled) {
    const double s = spec_.output_scale;
    // d(s * tanh(z))/dz = s * (1 - tanh^2) = s - out^2 / s
    delta = output_grad.array() * (s - cache.output.array().square() / s);
  } else {
    delta = output_grad;
  }

  for (std::size_t l = weights_.size(); l-- > 0;) {
    const Matrix& x = cache.layer_inputs[l];
    if (param_grads) {
      result.params.weights[l].noalias() = x.transpose() * delta;
      result.params.biases[l] = delta.colwise().sum();
    }
    Matrix dx = delta * weights_[l].transpose();
    if (l > 0) {
      // x = relu(z) so dz = dx where x > 0.
      delta = (x.array() > 0.0).select(dx, 0.0);
    } else {
      result.input_grad = std::move(dx);
    }
  }
  return result;
}

void MlpNet::adam_step(const MlpGradients& grads, const AdamConfig& config) {
  if (grads.weights.size() != weights_.size() || grads.biases.size() != biases_.size()) {
    throw_error(ErrorKind::shape, "gradient layer count does not match the network");
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (grads.weights[l].rows() != weights_[l].rows() || grads.weights[l].cols() != weights_[l].cols() ||
        grads.biases[l].size() != biases_[l].size()) {
      throw_error(ErrorKind::shape, "gradient shape mismatch at layer " + std::to_string(l));
    }
    if (!grads.weights[l].allFinite()) {
      throw_error(ErrorKind::numeric, "non-finite gradient in layers[" + std::to_string(l) + "].weights");
    }
    if (!grads.biases[l].allFinite()) {
      throw_error(ErrorKind::numeric, "non-finite gradient in layers[" + std::to_string(l) + "].biases");
    }
  }
  touch();
  const double t = static_cast<double>(++adam_.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const double b1 = config.beta1, b2 = config.beta2, lr = config.learning_rate, eps = config.epsilon;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    update(weights_[l], adam_.m_weights[l], adam_.v_weights[l], grads.weights[l]);
    update(biases_[l], adam_.m_biases[l], adam_.v_biases[l], grads.biases[l]);
  }
}

void MlpNet::polyak_update(const MlpNet& source, double tau) {
  if (source.spec_.layer_sizes != spec_.layer_sizes) {
    throw_error(ErrorKind::shape, "polyak update between networks of different architecture");
  }
  require(tau >= 0.0 && tau <= 1.0, ErrorKind::usage, "polyak tau must be in [0, 1]");
  touch();
  if (tau == 1.0) {
    weights_ = source.weights_;
    biases_ = source.biases_;
    return;
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    // Incremental form keeps target == source an exact fixed point.
    weights_[l] += tau * (source.weights_[l] - weights_[l]);
    biases_[l] += tau * (source.biases_[l] - biases_[l]);
  }
}

bool MlpNet::same_parameters(const MlpNet& other) const {
  if (spec_ != other.spec_) return false;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
  }
  return true;
}

void MlpNet::write(BinaryWriter& out, bool include_adam) const {
  out.put_bytes(kMagic);
  out.put_u32(kVersion);
  out.put_u32(static_cast<std::uint32_t>(spec_.layer_sizes.size()));
  for (auto s : spec_.layer_sizes) out.put_u64(s);
  out.put_u8(static_cast<std::uint8_t>(HiddenActivation::relu));
  out.put_u8(static_cast<std::uint8_t>(spec_.output));
  out.put_f64(spec_.output_scale);
  auto put_all = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.put_f64(m.data()[i]);
  };
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    put_all(weights_[l]);
    put_all(biases_[l]);
  }
  out.put_u8(include_adam ? 1 : 0);
  if (include_adam) {
    out.put_u64(adam_.step);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      put_all(adam_.m_weights[l]);
      put_all(adam_.v_weights[l]);
      put_all(adam_.m_biases[l]);
      put_all(adam_.v_biases[l]);
    }
  }
}

MlpNet MlpNet::read(BinaryReader& in) {
  in.expect_magic(kMagic);
  const auto version = in.get_u32();
  if (version != kVersion) in.fail("unsupported WMNN version " + std::to_string(version));
  const auto n = in.get_u32();
  if (n < 2 || n > 64) in.fail("implausible layer count " + std::to_string(n));
  MlpSpec spec;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto s = in.get_u64();
    if (s == 0 || s > (1u << 20)) in.fail("implausible layer size " + std::to_string(s));
    spec.layer_sizes.push_back(s);
  }
  if (in.get_u8() != static_cast<std::uint8_t>(HiddenActivation::relu)) in.fail("unknown hidden activation tag");
  const auto out_tag = in.get_u8();
  if (out_tag > 1) in.fail("unknown output activation tag");
  spec.output = static_cast<OutputActivation>(out_tag);
  spec.output_scale = in.get_f64();
  MlpNet net(spec);
  auto get_all = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.get_f64();
  };
  for (std::size_t l = 0; l < net.weights_.size(); ++l) {
    get_all(net.weights_[l]);
    get_all(net.biases_[l]);
  }
  const auto has_adam = in.get_u8();
  if (has_adam > 1) in.fail("bad adam presence flag");
  if (has_adam == 1) {
    net.adam_.step = in.get_u64();
    for (std::size_t l = 0; l < net.weights_.size(); ++l) {
      get_all(net.adam_.m_weights[l]);
      get_all(net.adam_.v_weights[l]);
      get_all(net.adam_.m_biases[l]);
      get_all(net.adam_.v_biases[l]);
    }
  }
  return net;
}

void MlpNet::save(const std::filesystem::path& path, bool include_adam) const {
  BinaryWriter w;
  write(w, include_adam);
  write_file(path, w.bytes());
}

MlpNet MlpNet::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  BinaryReader r(bytes, path.string());
  auto net = read(r);
  if (r.remaining() != 0) r.fail("trailing bytes after network");
  return net;
}

}  // namespace wmrl::nn
