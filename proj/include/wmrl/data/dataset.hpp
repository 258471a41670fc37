#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/rng.hpp"
#include "wmrl/nn/mlp.hpp"

namespace wmrl::data {

using nn::Matrix;
using nn::Vector;

enum class Flavor : std::uint8_t { random, medium, medium_replay, medium_expert, imported };

std::string to_string(Flavor flavor);
Flavor parse_flavor(const std::string& name);

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool done = false;

  bool operator==(const Transition& other) const;
};

/// A sampled minibatch, one transition per row.
struct Batch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector dones;  // 0.0 or 1.0
  std::vector<std::size_t> indices;  // source positions

  std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
};

/// Column storage for transitions, shared by datasets and the replay buffer.
class TransitionColumns {
 public:
  TransitionColumns() = default;
  TransitionColumns(std::size_t obs_dim, std::size_t act_dim);

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  std::size_t size() const { return rewards_.size(); }
  bool empty() const { return rewards_.empty(); }

  void reserve(std::size_t n);
  void push_back(const Transition& t);
  void set(std::size_t i, const Transition& t);
  Transition at(std::size_t i) const;
  Batch gather(std::span<const std::size_t> indices) const;
  void gather_row(std::size_t i, Batch& batch, Eigen::Index row) const;

  std::span<const double> states() const { return states_; }
  std::span<const double> actions() const { return actions_; }
  std::span<const double> rewards() const { return rewards_; }
  std::span<const double> next_states() const { return next_states_; }
  std::span<const std::uint8_t> dones() const { return dones_; }

  /// Rounds every stored value to the nearest 32-bit float.
  void quantize_to_f32();

  bool operator==(const TransitionColumns&) const = default;

 private:
  void check(const Transition& t) const;

  std::size_t obs_dim_ = 0;
  std::size_t act_dim_ = 0;
  std::vector<double> states_, actions_, rewards_, next_states_;
  std::vector<std::uint8_t> dones_;
};

/// Fixed array of transitions plus provenance.
struct OfflineDataset {
  std::string env_name;
  Flavor flavor = Flavor::imported;
  std::uint64_t seed = 0;
  TransitionColumns transitions;

  std::size_t size() const { return transitions.size(); }
  std::size_t obs_dim() const { return transitions.obs_dim(); }
  std::size_t act_dim() const { return transitions.act_dim(); }
  bool operator==(const OfflineDataset&) const = default;
};

/// State normalization: (s - mean) / (std + epsilon).
struct NormStats {
  Vector mean;
  Vector std;
  double epsilon = 1e-3;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  /// mean 0, std 1: for runs with no offline dataset.
  static NormStats identity(std::size_t dim, double epsilon = 1e-3);

  Matrix normalize(const Matrix& states) const;
  Vector normalize(const Vector& state) const;
  Matrix denormalize(const Matrix& states) const;

  void validate() const;
  void write(BinaryWriter& out) const;
  static NormStats read(BinaryReader& in);
  bool operator==(const NormStats& other) const;
};

NormStats compute_norm_stats(const OfflineDataset& dataset, double epsilon = 1e-3);

/// Bounded FIFO store of online experience.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t obs_dim, std::size_t act_dim, std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return storage_.size(); }
  bool empty() const { return storage_.empty(); }
  std::uint64_t insertions() const { return insertions_; }
  std::size_t obs_dim() const { return storage_.obs_dim(); }
  std::size_t act_dim() const { return storage_.act_dim(); }

  void add(const Transition& t);
  /// i-th oldest retained transition.
  Transition at(std::size_t i) const;
  Batch gather(std::span<const std::size_t> slots) const { return storage_.gather(slots); }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::uint64_t insertions_ = 0;
  TransitionColumns storage_;
};

/// Uniform with-replacement minibatch.
Batch sample_batch(const OfflineDataset& dataset, std::size_t batch_size, Rng& rng);
Batch sample_batch(const ReplayBuffer& buffer, std::size_t batch_size, Rng& rng);

/// k transitions uniformly without replacement, kept in their original order.
OfflineDataset subsample_dataset(const OfflineDataset& dataset, std::size_t k, std::uint64_t seed);

/// "ORLD" v1 on-disk format.
std::string encode_dataset(const OfflineDataset& dataset);
OfflineDataset decode_dataset(std::string_view bytes, const std::string& context);
void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

}  // namespace wmrl::data
