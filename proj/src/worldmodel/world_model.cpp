#include "wmrl/worldmodel/world_model.hpp"

#include <cmath>

#include "wmrl/core/error.hpp"

namespace wmrl::wm {
namespace {

constexpr std::string_view kMagic = "WMCK";
constexpr std::uint32_t kVersion = 1;

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

double mse(const Matrix& a, const Matrix& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw_error(ErrorKind::numeric, std::string("world model ") + what + " is not finite");
}

}  // namespace

WorldModel WorldModel::create(std::size_t obs_dim, std::size_t act_dim, const WorldModelConfig& config, Rng& rng) {
  require(obs_dim >= 1 && act_dim >= 1, ErrorKind::config, "world model dims must be >= 1");
  require(config.hidden >= 1, ErrorKind::config, "world model hidden width must be >= 1");
  require(config.log_var_min < config.log_var_max, ErrorKind::config, "log_var clamp range is empty");
  const std::size_t latent = config.latent_dim == 0 ? obs_dim : config.latent_dim;
  Rng enc_rng = rng.fork("encoder");
  Rng dec_rng = rng.fork("decoder");
  Rng tr_rng = rng.fork("transition");
  WorldModel wm{
      MlpNet(nn::make_spec(obs_dim, config.hidden, config.hidden_layers, 2 * latent), enc_rng),
      MlpNet(nn::make_spec(latent, config.hidden, config.hidden_layers, obs_dim), dec_rng),
      MlpNet(nn::make_spec(latent + act_dim, config.hidden, config.hidden_layers, latent), tr_rng),
      obs_dim,
      act_dim,
      latent,
      true,
      data::NormStats::identity(obs_dim),
      config,
  };
  wm.config.latent_dim = latent;
  return wm;
}

Encoding encode(const WorldModel& wm, const Matrix& states, Rng& rng, EncodeMode mode) {
  const auto L = static_cast<Eigen::Index>(wm.latent_dim);
  const Matrix out = wm.encoder.predict(states);
  Encoding e;
  e.mu = out.leftCols(L);
  e.log_var = out.rightCols(L).cwiseMax(wm.config.log_var_min).cwiseMin(wm.config.log_var_max);
  if (mode == EncodeMode::mean) {
    e.z = e.mu;
  } else {
    const Matrix eps = standard_normal(states.rows(), L, rng);
    e.z = e.mu.array() + (0.5 * e.log_var.array()).exp() * eps.array();
  }
  if (!e.z.allFinite()) throw_error(ErrorKind::numeric, "world model encoder produced non-finite values");
  return e;
}

double kl_to_standard_normal(const Matrix& mu, const Matrix& log_var) {
  require(mu.rows() == log_var.rows() && mu.cols() == log_var.cols(), ErrorKind::shape, "kl: shape mismatch");
  require(mu.rows() > 0, ErrorKind::usage, "kl: empty batch");
  const double sum = (mu.array().square() + log_var.array().exp() - log_var.array() - 1.0).sum();
  return 0.5 * sum / static_cast<double>(mu.rows());
}

double kl_from_standard_normal(const Matrix& mu, const Matrix& log_var) {
  require(mu.rows() == log_var.rows() && mu.cols() == log_var.cols(), ErrorKind::shape, "kl: shape mismatch");
  require(mu.rows() > 0, ErrorKind::usage, "kl: empty batch");
  const double sum =
      ((-log_var.array()).exp() * (1.0 + mu.array().square()) - 1.0 + log_var.array()).sum();
  return 0.5 * sum / static_cast<double>(mu.rows());
}

Matrix predict_next_latent(const WorldModel& wm, const Matrix& z, const Matrix& actions) {
  require(static_cast<std::size_t>(z.cols()) == wm.latent_dim, ErrorKind::shape, "latent dim mismatch");
  require(static_cast<std::size_t>(actions.cols()) == wm.act_dim && actions.rows() == z.rows(), ErrorKind::shape,
          "action batch does not match latent batch");
  return z + wm.transition.predict(concat_cols(z, actions));
}

Matrix generate_next_state(const WorldModel& wm, const Matrix& states, const Matrix& actions, Rng& rng,
                           EncodeMode mode, bool states_normalized) {
  if (states_normalized != wm.trained_on_normalized) {
    throw_error(ErrorKind::usage, std::string("world model was trained on ") +
                                      (wm.trained_on_normalized ? "normalized" : "raw") + " states but received " +
                                      (states_normalized ? "normalized" : "raw") + " states");
  }
  require(static_cast<std::size_t>(states.cols()) == wm.obs_dim, ErrorKind::shape, "state dim mismatch");
  const Encoding e = encode(wm, states, rng, mode);
  Matrix next = wm.decoder.predict(predict_next_latent(wm, e.z, actions));
  if (!next.allFinite()) throw_error(ErrorKind::numeric, "world model generated non-finite states");
  return next;
}

Matrix latent_target(const WorldModel& wm, const Matrix& next_states) {
  return wm.encoder.predict(next_states).leftCols(static_cast<Eigen::Index>(wm.latent_dim));
}

WmLossReport wm_loss(const WorldModel& wm, const Matrix& states, const Matrix& actions, const Matrix& next_states,
                     const Matrix& noise, WmGradients* grads) {
  return wm_loss(wm, states, actions, next_states, noise, latent_target(wm, next_states), grads);
}

WmLossReport wm_loss(const WorldModel& wm, const Matrix& states, const Matrix& actions, const Matrix& next_states,
                     const Matrix& noise, const Matrix& z_target, WmGradients* grads) {
  const auto B = states.rows();
  const auto L = static_cast<Eigen::Index>(wm.latent_dim);
  const auto D = static_cast<Eigen::Index>(wm.obs_dim);
  require(B > 0, ErrorKind::usage, "world model loss on an empty batch");
  require(next_states.rows() == B && actions.rows() == B && noise.rows() == B && noise.cols() == L &&
              z_target.rows() == B && z_target.cols() == L,
          ErrorKind::shape, "world model loss: inconsistent batch shapes");
  const auto& w = wm.config.weights;
  const double lv_min = wm.config.log_var_min, lv_max = wm.config.log_var_max;

  // Encoder on s_t, reparameterized sample.
  auto enc = wm.encoder.forward(states);
  const Matrix mu = enc.output.leftCols(L);
  const Matrix lv_raw = enc.output.rightCols(L);
  const Matrix lv = lv_raw.cwiseMax(lv_min).cwiseMin(lv_max);
  const Matrix sigma = (0.5 * lv.array()).exp().matrix();
  const Matrix z = mu + sigma.cwiseProduct(noise);

  // Reconstruction of s_t.
  auto dec_now = wm.decoder.forward(z);
  // Residual latent transition and next-state decode.
  auto trans = wm.transition.forward(concat_cols(z, actions));
  const Matrix z_next = z + trans.output;
  auto dec_next = wm.decoder.forward(z_next);

  WmLossReport r;
  r.recon_elbo = mse(dec_now.output, states);
  r.kl = wm.config.kl_direction == KlDirection::posterior_to_prior ? kl_to_standard_normal(mu, lv)
                                                                   : kl_from_standard_normal(mu, lv);
  r.state_recon = mse(dec_next.output, next_states);
  r.latent_recon = mse(z_next, z_target);
  r.total = w.recon * r.recon_elbo + w.kl * r.kl + w.state * r.state_recon + w.latent * r.latent_recon;
  check_finite(r.total, "loss");

  if (grads == nullptr) return r;

  const double bd = static_cast<double>(B * D);
  const double bl = static_cast<double>(B * L);
  const double b = static_cast<double>(B);

  const Matrix d_dec_next_out = (w.state * 2.0 / bd) * (dec_next.output - next_states);
  auto back_next = wm.decoder.backward(dec_next.cache, d_dec_next_out);
  Matrix d_z_next = back_next.input_grad + (w.latent * 2.0 / bl) * (z_next - z_target);

  auto back_trans = wm.transition.backward(trans.cache, d_z_next);
  const Matrix d_dec_now_out = (w.recon * 2.0 / bd) * (dec_now.output - states);
  auto back_now = wm.decoder.backward(dec_now.cache, d_dec_now_out);

  Matrix d_z = d_z_next + back_trans.input_grad.leftCols(L) + back_now.input_grad;

  Matrix d_mu = d_z;
  // dz/dlv = 0.5 * sigma * eps
  Matrix d_lv = (d_z.array() * 0.5 * sigma.array() * noise.array()).matrix();
  if (wm.config.kl_direction == KlDirection::posterior_to_prior) {
    d_mu += (w.kl / b) * mu;
    d_lv += ((w.kl * 0.5 / b) * (lv.array().exp() - 1.0)).matrix();
  } else {
    const Eigen::ArrayXXd inv_var = (-lv.array()).exp();
    d_mu += ((w.kl / b) * mu.array() * inv_var).matrix();
    d_lv += ((w.kl * 0.5 / b) * (1.0 - inv_var * (1.0 + mu.array().square()))).matrix();
  }
  // The clamp passes gradient only strictly inside its range.
  d_lv = ((lv_raw.array() > lv_min) && (lv_raw.array() < lv_max)).select(d_lv, 0.0);

  Matrix d_enc_out(B, 2 * L);
  d_enc_out << d_mu, d_lv;
  auto back_enc = wm.encoder.backward(enc.cache, d_enc_out);

  grads->encoder = std::move(back_enc.params);
  grads->decoder = std::move(back_next.params);
  grads->decoder += back_now.params;
  grads->transition = std::move(back_trans.params);
  return r;
}

WmLossReport wm_loss(const WorldModel& wm, const data::Batch& batch, Rng& rng, WmGradients* grads) {
  const Matrix noise = standard_normal(static_cast<Eigen::Index>(batch.size()),
                                       static_cast<Eigen::Index>(wm.latent_dim), rng);
  return wm_loss(wm, batch.states, batch.actions, batch.next_states, noise, grads);
}

std::vector<WmCurvePoint> train_world_model(WorldModel& wm, const data::OfflineDataset& dataset,
                                            const data::NormStats& norm_stats, const WmTrainConfig& config) {
  require(dataset.size() > 0, ErrorKind::usage, "cannot train a world model on an empty dataset");
  require(dataset.obs_dim() == wm.obs_dim && dataset.act_dim() == wm.act_dim, ErrorKind::shape,
          "dataset dims do not match the world model");
  require(norm_stats.dim() == wm.obs_dim, ErrorKind::shape, "norm stats dim does not match the world model");
  require(config.batch_size > 0 && config.record_every > 0, ErrorKind::config,
          "world model batch size and record interval must be > 0");
  config.adam.validate();

  wm.trained_on_normalized = true;
  wm.norm_stats = norm_stats;

  Rng rng(config.seed);
  Rng batch_rng = rng.fork("batches");
  Rng noise_rng = rng.fork("noise");

  // Fixed evaluation subset with frozen noise.
  const std::size_t n_eval = std::min(config.eval_samples, dataset.size());
  std::vector<std::size_t> eval_idx(n_eval);
  for (std::size_t i = 0; i < n_eval; ++i) eval_idx[i] = i * dataset.size() / n_eval;
  data::Batch eval = dataset.transitions.gather(eval_idx);
  const Matrix eval_states = norm_stats.normalize(eval.states);
  const Matrix eval_next = norm_stats.normalize(eval.next_states);
  Rng eval_noise_rng = rng.fork("eval-noise");
  const Matrix eval_noise =
      standard_normal(static_cast<Eigen::Index>(n_eval), static_cast<Eigen::Index>(wm.latent_dim), eval_noise_rng);
  auto evaluate = [&] { return wm_loss(wm, eval_states, eval.actions, eval_next, eval_noise); };

  std::vector<WmCurvePoint> curve;
  std::size_t it = 0;
  try {
    for (; it < config.iterations; ++it) {
      if (it % config.record_every == 0) curve.push_back({it, evaluate()});
      data::Batch batch = data::sample_batch(dataset, config.batch_size, batch_rng);
      batch.states = norm_stats.normalize(batch.states);
      batch.next_states = norm_stats.normalize(batch.next_states);
      WmGradients g;
      wm_loss(wm, batch, noise_rng, &g);
      wm.encoder.adam_step(g.encoder, config.adam);
      wm.decoder.adam_step(g.decoder, config.adam);
      wm.transition.adam_step(g.transition, config.adam);
    }
    curve.push_back({config.iterations, evaluate()});
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    throw_error(ErrorKind::training, "world model diverged at iteration " + std::to_string(it) + ": " + e.what());
  }
  return curve;
}

// ---------------------------------------------------------------------------

void WorldModel::write(BinaryWriter& out) const {
  out.put_bytes(kMagic);
  out.put_u32(kVersion);
  out.put_u64(obs_dim);
  out.put_u64(act_dim);
  out.put_u64(latent_dim);
  out.put_u8(trained_on_normalized ? 1 : 0);
  out.put_u8(static_cast<std::uint8_t>(config.kl_direction));
  out.put_f64(config.log_var_min);
  out.put_f64(config.log_var_max);
  out.put_f64(config.weights.recon);
  out.put_f64(config.weights.kl);
  out.put_f64(config.weights.state);
  out.put_f64(config.weights.latent);
  norm_stats.write(out);
  encoder.write(out, true);
  decoder.write(out, true);
  transition.write(out, true);
}

WorldModel WorldModel::read(BinaryReader& in) {
  in.expect_magic(kMagic);
  const auto version = in.get_u32();
  if (version != kVersion) in.fail("unsupported WMCK version " + std::to_string(version));
  const auto obs = in.get_u64();
  const auto act = in.get_u64();
  const auto latent = in.get_u64();
  const auto normalized = in.get_u8();
  const auto kl = in.get_u8();
  if (normalized > 1 || kl > 1) in.fail("bad world model flag");
  WorldModelConfig config;
  config.latent_dim = latent;
  config.kl_direction = static_cast<KlDirection>(kl);
  config.log_var_min = in.get_f64();
  config.log_var_max = in.get_f64();
  config.weights.recon = in.get_f64();
  config.weights.kl = in.get_f64();
  config.weights.state = in.get_f64();
  config.weights.latent = in.get_f64();
  auto norm = data::NormStats::read(in);
  auto encoder = MlpNet::read(in);
  auto decoder = MlpNet::read(in);
  auto transition = MlpNet::read(in);
  if (encoder.input_dim() != obs || encoder.output_dim() != 2 * latent || decoder.input_dim() != latent ||
      decoder.output_dim() != obs || transition.input_dim() != latent + act || transition.output_dim() != latent ||
      norm.dim() != obs) {
    in.fail("world model head dimensions are inconsistent");
  }
  config.hidden = encoder.spec().layer_sizes.size() > 2 ? encoder.spec().layer_sizes[1] : 0;
  config.hidden_layers = encoder.spec().layer_sizes.size() - 2;
  return WorldModel{std::move(encoder), std::move(decoder), std::move(transition), obs, act, latent,
                    normalized == 1, std::move(norm), config};
}

void WorldModel::save(const std::filesystem::path& path) const {
  BinaryWriter w;
  write(w);
  write_file(path, w.bytes());
}

WorldModel WorldModel::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  BinaryReader r(bytes, path.string());
  auto wm = read(r);
  if (r.remaining() != 0) r.fail("trailing bytes after world model");
  return wm;
}

}  // namespace wmrl::wm
