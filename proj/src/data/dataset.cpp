#include "wmrl/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wmrl/core/error.hpp"
#include "wmrl/core/text.hpp"

namespace wmrl::data {

std::string to_string(Flavor flavor) {
  switch (flavor) {
    case Flavor::random: return "random";
    case Flavor::medium: return "medium";
    case Flavor::medium_replay: return "medium_replay";
    case Flavor::medium_expert: return "medium_expert";
    case Flavor::imported: return "imported";
  }
  return "imported";
}

Flavor parse_flavor(const std::string& name) {
  if (name == "random") return Flavor::random;
  if (name == "medium") return Flavor::medium;
  if (name == "medium_replay" || name == "medium-replay") return Flavor::medium_replay;
  if (name == "medium_expert" || name == "medium-expert") return Flavor::medium_expert;
  if (name == "imported") return Flavor::imported;
  throw_error(ErrorKind::config, "unknown dataset flavor '" + name + "'");
}

bool Transition::operator==(const Transition& o) const {
  return state == o.state && action == o.action && reward == o.reward && next_state == o.next_state &&
         done == o.done;
}

// ---------------------------------------------------------------------------

TransitionColumns::TransitionColumns(std::size_t obs_dim, std::size_t act_dim)
    : obs_dim_(obs_dim), act_dim_(act_dim) {
  require(obs_dim >= 1 && act_dim >= 1, ErrorKind::shape, "transition dims must be >= 1");
}

void TransitionColumns::reserve(std::size_t n) {
  states_.reserve(n * obs_dim_);
  actions_.reserve(n * act_dim_);
  rewards_.reserve(n);
  next_states_.reserve(n * obs_dim_);
  dones_.reserve(n);
}

void TransitionColumns::check(const Transition& t) const {
  if (static_cast<std::size_t>(t.state.size()) != obs_dim_ ||
      static_cast<std::size_t>(t.next_state.size()) != obs_dim_ ||
      static_cast<std::size_t>(t.action.size()) != act_dim_) {
    throw_error(ErrorKind::shape, "transition dims do not match storage (obs " + std::to_string(obs_dim_) +
                                      ", act " + std::to_string(act_dim_) + ")");
  }
  if (!t.state.allFinite() || !t.next_state.allFinite() || !t.action.allFinite() || !std::isfinite(t.reward)) {
    throw_error(ErrorKind::numeric, "transition contains non-finite values");
  }
}

void TransitionColumns::push_back(const Transition& t) {
  check(t);
  states_.insert(states_.end(), t.state.data(), t.state.data() + obs_dim_);
  actions_.insert(actions_.end(), t.action.data(), t.action.data() + act_dim_);
  rewards_.push_back(t.reward);
  next_states_.insert(next_states_.end(), t.next_state.data(), t.next_state.data() + obs_dim_);
  dones_.push_back(t.done ? 1 : 0);
}

void TransitionColumns::set(std::size_t i, const Transition& t) {
  check(t);
  require(i < size(), ErrorKind::usage, "transition index out of range");
  std::copy_n(t.state.data(), obs_dim_, states_.begin() + static_cast<std::ptrdiff_t>(i * obs_dim_));
  std::copy_n(t.action.data(), act_dim_, actions_.begin() + static_cast<std::ptrdiff_t>(i * act_dim_));
  rewards_[i] = t.reward;
  std::copy_n(t.next_state.data(), obs_dim_, next_states_.begin() + static_cast<std::ptrdiff_t>(i * obs_dim_));
  dones_[i] = t.done ? 1 : 0;
}

Transition TransitionColumns::at(std::size_t i) const {
  require(i < size(), ErrorKind::usage, "transition index out of range");
  Transition t;
  t.state = Eigen::Map<const Vector>(states_.data() + i * obs_dim_, static_cast<Eigen::Index>(obs_dim_));
  t.action = Eigen::Map<const Vector>(actions_.data() + i * act_dim_, static_cast<Eigen::Index>(act_dim_));
  t.reward = rewards_[i];
  t.next_state = Eigen::Map<const Vector>(next_states_.data() + i * obs_dim_, static_cast<Eigen::Index>(obs_dim_));
  t.done = dones_[i] != 0;
  return t;
}

void TransitionColumns::gather_row(std::size_t i, Batch& batch, Eigen::Index row) const {
  const auto od = static_cast<Eigen::Index>(obs_dim_);
  const auto ad = static_cast<Eigen::Index>(act_dim_);
  batch.states.row(row) = Eigen::Map<const nn::RowVector>(states_.data() + i * obs_dim_, od);
  batch.actions.row(row) = Eigen::Map<const nn::RowVector>(actions_.data() + i * act_dim_, ad);
  batch.rewards[row] = rewards_[i];
  batch.next_states.row(row) = Eigen::Map<const nn::RowVector>(next_states_.data() + i * obs_dim_, od);
  batch.dones[row] = dones_[i] ? 1.0 : 0.0;
}

Batch TransitionColumns::gather(std::span<const std::size_t> indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch batch;
  batch.states.resize(n, static_cast<Eigen::Index>(obs_dim_));
  batch.actions.resize(n, static_cast<Eigen::Index>(act_dim_));
  batch.rewards.resize(n);
  batch.next_states.resize(n, static_cast<Eigen::Index>(obs_dim_));
  batch.dones.resize(n);
  batch.indices.assign(indices.begin(), indices.end());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = indices[static_cast<std::size_t>(r)];
    require(i < size(), ErrorKind::usage, "gather index out of range");
    gather_row(i, batch, r);
  }
  return batch;
}

void TransitionColumns::quantize_to_f32() {
  auto q = [](std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  };
  q(states_);
  q(actions_);
  q(rewards_);
  q(next_states_);
}

// ---------------------------------------------------------------------------

NormStats NormStats::identity(std::size_t dim, double epsilon) {
  NormStats s;
  s.mean = Vector::Zero(static_cast<Eigen::Index>(dim));
  s.std = Vector::Ones(static_cast<Eigen::Index>(dim));
  s.epsilon = epsilon;
  return s;
}

Matrix NormStats::normalize(const Matrix& states) const {
  require(static_cast<std::size_t>(states.cols()) == dim(), ErrorKind::shape, "normalize: state dim mismatch");
  const nn::RowVector denom = (std.array() + epsilon).matrix().transpose();
  return (states.rowwise() - mean.transpose()).array().rowwise() / denom.array();
}

Vector NormStats::normalize(const Vector& state) const {
  require(static_cast<std::size_t>(state.size()) == dim(), ErrorKind::shape, "normalize: state dim mismatch");
  return ((state - mean).array() / (std.array() + epsilon)).matrix();
}

Matrix NormStats::denormalize(const Matrix& states) const {
  require(static_cast<std::size_t>(states.cols()) == dim(), ErrorKind::shape, "denormalize: state dim mismatch");
  const nn::RowVector scale = (std.array() + epsilon).matrix().transpose();
  return (states.array().rowwise() * scale.array()).matrix().rowwise() + mean.transpose();
}

void NormStats::validate() const {
  require(mean.size() == std.size() && mean.size() >= 1, ErrorKind::shape, "norm stats dims mismatch");
  require((std.array() >= 0.0).all(), ErrorKind::config, "norm stats std must be >= 0");
  require(epsilon > 0.0, ErrorKind::config, "norm stats epsilon must be > 0");
  require(mean.allFinite() && std.allFinite(), ErrorKind::numeric, "norm stats must be finite");
}

void NormStats::write(BinaryWriter& out) const {
  out.put_u32(static_cast<std::uint32_t>(dim()));
  for (Eigen::Index i = 0; i < mean.size(); ++i) out.put_f64(mean[i]);
  for (Eigen::Index i = 0; i < std.size(); ++i) out.put_f64(std[i]);
  out.put_f64(epsilon);
}

NormStats NormStats::read(BinaryReader& in) {
  const auto d = in.get_u32();
  if (d == 0 || d > (1u << 20)) in.fail("implausible norm stats dim " + std::to_string(d));
  NormStats s;
  s.mean.resize(d);
  s.std.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) s.mean[i] = in.get_f64();
  for (std::uint32_t i = 0; i < d; ++i) s.std[i] = in.get_f64();
  s.epsilon = in.get_f64();
  return s;
}

bool NormStats::operator==(const NormStats& o) const {
  return mean == o.mean && std == o.std && epsilon == o.epsilon;
}

NormStats compute_norm_stats(const OfflineDataset& dataset, double epsilon) {
  require(dataset.size() > 0, ErrorKind::usage, "cannot compute norm stats of an empty dataset");
  require(epsilon > 0.0, ErrorKind::config, "norm epsilon must be > 0");
  const auto n = dataset.size();
  const auto d = dataset.obs_dim();
  const auto states = dataset.transitions.states();
  NormStats s;
  s.epsilon = epsilon;
  s.mean = Vector::Zero(static_cast<Eigen::Index>(d));
  s.std = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[static_cast<Eigen::Index>(j)] += states[i * d + j];
  s.mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = states[i * d + j] - s.mean[static_cast<Eigen::Index>(j)];
      s.std[static_cast<Eigen::Index>(j)] += dev * dev;
    }
  }
  s.std = (s.std / static_cast<double>(n)).cwiseSqrt();
  return s;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t obs_dim, std::size_t act_dim, std::size_t capacity)
    : capacity_(capacity), storage_(obs_dim, act_dim) {
  require(capacity >= 1, ErrorKind::usage, "replay buffer capacity must be >= 1");
}

void ReplayBuffer::add(const Transition& t) {
  if (storage_.size() < capacity_) {
    storage_.push_back(t);
  } else {
    storage_.set(cursor_, t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
  ++insertions_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  require(i < size(), ErrorKind::usage, "replay buffer index out of range");
  if (storage_.size() < capacity_) return storage_.at(i);
  return storage_.at((cursor_ + i) % capacity_);
}

namespace {

template <typename Source>
Batch sample_uniform(const Source& source, std::size_t size, std::size_t batch_size, Rng& rng) {
  require(size > 0, ErrorKind::usage, "cannot sample from an empty source");
  require(batch_size > 0, ErrorKind::usage, "batch size must be > 0");
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = rng.index(size);
  return source.gather(idx);
}

}  // namespace

Batch sample_batch(const OfflineDataset& dataset, std::size_t batch_size, Rng& rng) {
  return sample_uniform(dataset.transitions, dataset.size(), batch_size, rng);
}

Batch sample_batch(const ReplayBuffer& buffer, std::size_t batch_size, Rng& rng) {
  return sample_uniform(buffer, buffer.size(), batch_size, rng);
}

OfflineDataset subsample_dataset(const OfflineDataset& dataset, std::size_t k, std::uint64_t seed) {
  require(k <= dataset.size(), ErrorKind::usage,
          "cannot subsample " + std::to_string(k) + " transitions from " + std::to_string(dataset.size()));
  std::vector<std::size_t> perm(dataset.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(perm[i], perm[i + rng.index(perm.size() - i)]);
  perm.resize(k);
  std::sort(perm.begin(), perm.end());
  OfflineDataset out;
  out.env_name = dataset.env_name;
  out.flavor = dataset.flavor;
  out.seed = seed;
  out.transitions = TransitionColumns(dataset.obs_dim(), dataset.act_dim());
  out.transitions.reserve(k);
  for (auto i : perm) out.transitions.push_back(dataset.transitions.at(i));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "ORLD";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::string encode_dataset(const OfflineDataset& dataset) {
  require(dataset.size() > 0, ErrorKind::usage, "refusing to write an empty dataset");
  const auto& t = dataset.transitions;
  BinaryWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kVersion);
  w.put_u32(static_cast<std::uint32_t>(t.obs_dim()));
  w.put_u32(static_cast<std::uint32_t>(t.act_dim()));
  w.put_u64(t.size());
  for (double v : t.states()) w.put_f32(static_cast<float>(v));
  for (double v : t.actions()) w.put_f32(static_cast<float>(v));
  for (double v : t.rewards()) w.put_f32(static_cast<float>(v));
  for (double v : t.next_states()) w.put_f32(static_cast<float>(v));
  for (auto d : t.dones()) w.put_u8(d);
  std::ostringstream meta;
  meta << "env=" << dataset.env_name << "\nflavor=" << to_string(dataset.flavor) << "\nseed=" << dataset.seed
       << "\n";
  w.put_string(meta.str());
  return w.take();
}

OfflineDataset decode_dataset(std::string_view bytes, const std::string& context) {
  BinaryReader r(bytes, context);
  r.expect_magic(kMagic);
  const auto version = r.get_u32();
  if (version != kVersion) r.fail("unsupported ORLD version " + std::to_string(version));
  const auto obs_dim = r.get_u32();
  const auto act_dim = r.get_u32();
  if (obs_dim == 0 || act_dim == 0) r.fail("zero dimension");
  const auto n = r.get_u64();
  if (n == 0) r.fail("empty dataset");
  const std::uint64_t floats = n * (2ull * obs_dim + act_dim + 1);
  if (floats / n != 2ull * obs_dim + act_dim + 1 || floats * 4 + n > r.remaining()) {
    r.fail("truncated data (header declares " + std::to_string(n) + " transitions)");
  }
  auto read_block = [&](std::size_t count) {
    std::vector<double> out(count);
    for (auto& v : out) v = static_cast<double>(r.get_f32());
    return out;
  };
  const auto states = read_block(n * obs_dim);
  const auto actions = read_block(n * act_dim);
  const auto rewards = read_block(n);
  const auto next_states = read_block(n * obs_dim);
  std::vector<std::uint8_t> dones(n);
  for (auto& d : dones) {
    d = r.get_u8();
    if (d > 1) r.fail("done flag must be 0 or 1");
  }
  const auto meta_text = r.get_string();
  if (r.remaining() != 0) r.fail("trailing bytes after metadata");
  const auto meta = parse_key_values(meta_text, context + " metadata");

  OfflineDataset ds;
  auto get = [&](const std::string& key) -> std::string {
    auto it = meta.find(key);
    if (it == meta.end()) r.fail("metadata missing '" + key + "'");
    return it->second;
  };
  ds.env_name = get("env");
  ds.flavor = parse_flavor(get("flavor"));
  ds.seed = parse_u64(get("seed"), "dataset seed");
  ds.transitions = TransitionColumns(obs_dim, act_dim);
  ds.transitions.reserve(n);
  Transition t;
  for (std::size_t i = 0; i < n; ++i) {
    t.state = Eigen::Map<const Vector>(states.data() + i * obs_dim, obs_dim);
    t.action = Eigen::Map<const Vector>(actions.data() + i * act_dim, act_dim);
    t.reward = rewards[i];
    t.next_state = Eigen::Map<const Vector>(next_states.data() + i * obs_dim, obs_dim);
    t.done = dones[i] != 0;
    ds.transitions.push_back(t);
  }
  return ds;
}

void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path) {
  write_file(path, encode_dataset(dataset));
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file(path), path.string());
}

}  // namespace wmrl::data
