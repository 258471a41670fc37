#include "wmrl/agents/td3.hpp"
#include "wmrl/core/binary_io.hpp"
#include "wmrl/core/error.hpp"

namespace wmrl::agents {
namespace {

constexpr std::string_view kMagic = "AGCK";
constexpr std::uint32_t kVersion = 1;

void put_vector(BinaryWriter& w, const Vector& v) {
  w.put_u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.put_f64(v[i]);
}

Vector get_vector(BinaryReader& r) {
  const auto n = r.get_u32();
  if (n > (1u << 20)) r.fail("implausible vector length");
  Vector v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = r.get_f64();
  return v;
}

void put_hyper(BinaryWriter& w, const Hyperparams& h) {
  w.put_f64(h.discount);
  w.put_f64(h.tau);
  w.put_f64(h.policy_noise);
  w.put_f64(h.noise_clip);
  w.put_u64(h.policy_delay);
  w.put_f64(h.exploration_noise);
  w.put_u64(h.batch_size);
  w.put_f64(h.bc_weight);
  w.put_f64(h.augment_fraction);
  w.put_f64(h.actor_lr);
  w.put_f64(h.critic_lr);
  w.put_u64(h.hidden);
  w.put_u64(h.hidden_layers);
}

Hyperparams get_hyper(BinaryReader& r) {
  Hyperparams h;
  h.discount = r.get_f64();
  h.tau = r.get_f64();
  h.policy_noise = r.get_f64();
  h.noise_clip = r.get_f64();
  h.policy_delay = r.get_u64();
  h.exploration_noise = r.get_f64();
  h.batch_size = r.get_u64();
  h.bc_weight = r.get_f64();
  h.augment_fraction = r.get_f64();
  h.actor_lr = r.get_f64();
  h.critic_lr = r.get_f64();
  h.hidden = r.get_u64();
  h.hidden_layers = r.get_u64();
  return h;
}

}  // namespace

std::string AgentCheckpoint::encode() const {
  BinaryWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kVersion);
  w.put_u8(static_cast<std::uint8_t>(phase));
  w.put_string(env_name);
  put_vector(w, action_low);
  put_vector(w, action_high);
  w.put_u64(run_seed);
  w.put_u64(iteration);
  w.put_u64(env_steps);
  w.put_u64(warm_start_steps);
  w.put_u64(buffer_capacity);
  put_hyper(w, hyper);
  norm_stats.write(w);
  actor.write(w, true);
  critic1.write(w, true);
  critic2.write(w, true);
  target_actor.write(w, false);
  target_critic1.write(w, false);
  target_critic2.write(w, false);
  return w.take();
}

AgentCheckpoint AgentCheckpoint::decode(std::string_view bytes, const std::string& context) {
  BinaryReader r(bytes, context);
  r.expect_magic(kMagic);
  const auto version = r.get_u32();
  if (version != kVersion) r.fail("unsupported AGCK version " + std::to_string(version));
  const auto phase = r.get_u8();
  if (phase > 1) r.fail("bad phase tag");
  auto env_name = r.get_string();
  auto low = get_vector(r);
  auto high = get_vector(r);
  const auto seed = r.get_u64();
  const auto iteration = r.get_u64();
  const auto env_steps = r.get_u64();
  const auto warm_start_steps = r.get_u64();
  const auto buffer_capacity = r.get_u64();
  auto hyper = get_hyper(r);
  auto norm = data::NormStats::read(r);
  auto actor = MlpNet::read(r);
  auto critic1 = MlpNet::read(r);
  auto critic2 = MlpNet::read(r);
  auto target_actor = MlpNet::read(r);
  auto target_critic1 = MlpNet::read(r);
  auto target_critic2 = MlpNet::read(r);
  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
  if (target_actor.spec() != actor.spec() || target_critic1.spec() != critic1.spec() ||
      target_critic2.spec() != critic2.spec() || critic1.spec() != critic2.spec()) {
    r.fail("target networks do not match their sources");
  }
  if (low.size() != high.size() || static_cast<std::size_t>(low.size()) != actor.output_dim() ||
      norm.dim() != actor.input_dim()) {
    r.fail("checkpoint dimensions are inconsistent");
  }
  AgentCheckpoint ckpt{std::move(actor),          std::move(critic1),        std::move(critic2),
                       std::move(target_actor),   std::move(target_critic1), std::move(target_critic2),
                       hyper,                     std::move(norm),           static_cast<Phase>(phase),
                       std::move(env_name),       std::move(low),            std::move(high),
                       seed,                      iteration,                 env_steps,
                       warm_start_steps,          buffer_capacity};
  return ckpt;
}

void AgentCheckpoint::save(const std::filesystem::path& path) const { write_file(path, encode()); }

AgentCheckpoint AgentCheckpoint::load(const std::filesystem::path& path) {
  return decode(read_file(path), path.string());
}

}  // namespace wmrl::agents
