#include "dgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dgan {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (epochs < 0) fail("epochs must be >= 0");
  if (optimizer != "sgd" && optimizer != "adam") fail("optimizer must be 'sgd' or 'adam'");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    fail("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (d_steps_per_g_step < 1) fail("d_steps_per_g_step must be >= 1");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) fail("grad_clip_norm must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (!(kl_weight > 0.0) || !(recon_weight > 0.0)) fail("loss weights must be positive");
  if (max_steps < 0) fail("max_steps must be >= 0");
}

std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split: fraction must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size())));
  if (n_train == 0 || n_train >= data.size())
    throw std::invalid_argument("split: " + std::to_string(data.size()) + " windows leave an empty train or test set");
  return {data.subset(0, n_train), data.subset(n_train, data.size())};
}

PreparedData prepare(std::shared_ptr<const STSequence> raw, std::shared_ptr<const FactorSeries> factors, Index T,
                     double train_fraction) {
  PreparedData p;
  p.raw = raw;
  auto all = window(raw, std::move(factors), T);
  auto [tr, te] = split(all, train_fraction);
  const std::size_t covered = tr.target_index(tr.size() - 1) + 1;
  p.scaler = fit_minmax(std::span<const STMap>(raw->maps().data(), covered));
  p.normalized = std::make_shared<const STSequence>(p.scaler.normalize(*raw));
  p.train = tr.rebind(p.normalized);
  p.test = te.rebind(p.normalized);
  return p;
}

Optimizer::Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

void Optimizer::step(std::vector<Parameter*> params, std::int64_t step_index) {
  std::erase_if(params, [](const Parameter* p) { return !p->trainable; });
  double sq = 0.0;
  for (auto* p : params) {
    if (p->grad.size() != p->value.size()) p->zero_grad();
    if (!p->grad.allFinite()) throw std::runtime_error("divergence detected at step " + std::to_string(step_index));
    sq += p->grad.squaredNorm();
  }
  double s = 1.0;
  if (cfg_.grad_clip_norm) {
    const double n = std::sqrt(sq);
    if (n > *cfg_.grad_clip_norm) s = *cfg_.grad_clip_norm / n;
  }
  ++t_;
  const double lr = cfg_.learning_rate;
  for (auto* p : params) {
    const Vector g = s * p->grad;
    if (cfg_.optimizer == "adam") {
      auto& m = m_[p];
      auto& v = v_[p];
      if (m.size() == 0) m = v = Vector::Zero(g.size());
      m = cfg_.adam_beta1 * m + (1.0 - cfg_.adam_beta1) * g;
      v = cfg_.adam_beta2 * v + (1.0 - cfg_.adam_beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
      p->value.data.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.adam_eps);
    } else if (cfg_.momentum > 0.0) {
      auto& m = m_[p];
      if (m.size() == 0) m = Vector::Zero(g.size());
      m = cfg_.momentum * m + g;
      p->value.data -= lr * m;
    } else {
      sgd_step(p->value.data, g, lr, std::nullopt, step_index);
    }
    if (!p->value.data.allFinite())
      throw std::runtime_error("divergence detected at step " + std::to_string(step_index));
  }
}

namespace {

void collect(ParamSet& ps, std::vector<Parameter*>& out) {
  for (auto& [name, p] : ps)
    if (p.trainable) out.push_back(&p);
}

void zero(const std::vector<Parameter*>& ps) {
  for (auto* p : ps) p->zero_grad();
}

}  // namespace

std::vector<Parameter*> eg_params(DGanModel& model) {
  std::vector<Parameter*> out;
  collect(model.encoder(), out);
  collect(model.factor_encoder(), out);
  collect(model.decoder(), out);
  return out;
}

std::vector<Parameter*> d_params(DGanModel& model) {
  std::vector<Parameter*> out;
  collect(model.discriminator(), out);
  return out;
}

LossReport train_step(DGanModel& model, const BatchInput& batch, const TrainConfig& cfg, Optimizer& opt_d,
                      Optimizer& opt_eg, Rng& rng, std::int64_t step_index) {
  LossReport rep;
  Graph g;
  Context ctx{g, true, &rng};
  const Noise noise = model.draw_noise(batch.batch, rng);
  GeneratorPass pass;
  try {
    pass = model.generate(ctx, batch, noise);
  } catch (const std::domain_error&) {
    throw std::runtime_error("divergence detected at step " + std::to_string(step_index));
  }

  const auto dparams = d_params(model);
  for (Index s = 0; s < cfg.d_steps_per_g_step; ++s) {
    Graph gd;
    Context dctx{gd, true, &rng};
    Var target = gd.constant(pass.target.value());
    Var x_enc = gd.constant(pass.x_enc.value());
    Var x_fake = gd.constant(pass.x_fake.value());
    Var fv = gd.constant(pass.fv_cat.value());
    Var z = gd.constant(pass.prior.value());
    try {
      Var d_real = model.discriminate(dctx, target, z);
      Var d_fake = model.discriminate(dctx, x_fake, z);
      Var d_enc = model.discriminate(dctx, x_enc, fv);
      Var loss = graph_loss::d_loss(d_real, d_fake, d_enc, cfg.d_enc_label);
      rep.d_loss = loss.value().item();
      zero(dparams);
      gd.backward(loss);
    } catch (const std::domain_error&) {
      throw std::runtime_error("divergence detected at step " + std::to_string(step_index));
    }
    opt_d.step(dparams, step_index);
  }

  const auto egparams = eg_params(model);
  Context ectx = ctx;
  ectx.trainable = false;
  ectx.update_stats = false;
  try {
    Var d_fake = model.discriminate(ectx, pass.x_fake, pass.prior);
    Var d_enc = model.discriminate(ectx, pass.x_enc, pass.fv_cat);
    Var gl = graph_loss::g_loss(d_fake, d_enc);
    Var kl = graph_loss::kl_divergence(pass.post_x.mu, pass.post_x.logvar);
    if (pass.post_f) kl = ops::add(kl, graph_loss::kl_divergence(pass.post_f->mu, pass.post_f->logvar));
    Var rec = graph_loss::recon_loss(pass.target, pass.x_enc);
    Var total = graph_loss::compose_eg(kl, rec, gl, {cfg.kl_weight, cfg.recon_weight});
    rep.g_loss = gl.value().item();
    rep.kl = kl.value().item();
    rep.recon = rec.value().item();
    rep.total_eg = total.value().item();
    zero(egparams);
    g.backward(total);
  } catch (const std::domain_error&) {
    throw std::runtime_error("divergence detected at step " + std::to_string(step_index));
  }
  opt_eg.step(egparams, step_index);
  return rep;
}

TrainResult train(const ArchSpec& arch, const TrainConfig& cfg, const WindowedDataset& train_set,
                  const MinMaxScaler& scaler, const TrainOptions& options) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("no training data");
  TrainResult result;
  auto& st = result.state;
  st.checkpoint.model = DGanModel(arch, cfg.seed);
  st.checkpoint.scaler = scaler;
  st.checkpoint.config_hash = options.config_hash;
  st.checkpoint.seed = cfg.seed;
  DGanModel& model = st.checkpoint.model;

  std::seed_seq sseq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x7a11u};
  Rng rng(sseq);
  Optimizer opt_d(cfg), opt_eg(cfg);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  auto save = [&](const std::filesystem::path& path) {
    save_checkpoint(st.checkpoint, path);
    result.checkpoint_path = path;
  };
  // Snapshot with recalibrated statistics; the live running averages keep going.
  auto save_snapshot = [&](const std::filesystem::path& path) {
    Checkpoint snap = st.checkpoint;
    if (cfg.recalibrate_bn && st.step > 0) snap.model.recalibrate_batch_norm(train_set);
    save_checkpoint(snap, path);
    result.checkpoint_path = path;
  };

  bool stop = false;
  for (Index e = 0; e < cfg.epochs && !stop; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(bs, order.size() - b));
      const BatchInput batch = model.make_batch(train_set, idx);
      const DGanModel last_good = model;
      LossReport rep;
      try {
        rep = train_step(model, batch, cfg, opt_d, opt_eg, rng, st.step);
      } catch (const std::runtime_error&) {
        model = last_good;
        if (options.out_dir) {
          save(*options.out_dir / "checkpoint_last_good.bin");
          write_training_log(st.history, *options.out_dir / "train_log.csv");
        }
        throw;
      }
      st.history.push_back(rep);
      if (options.on_step) options.on_step(st.step, rep);
      ++st.step;
      if (cfg.max_steps > 0 && st.step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    st.epoch = e + 1;
    st.checkpoint.epoch = st.epoch;
    if (options.out_dir && cfg.checkpoint_every > 0 && st.epoch % cfg.checkpoint_every == 0)
      save_snapshot(*options.out_dir / ("checkpoint_epoch" + std::to_string(st.epoch) + ".bin"));
  }
  if (cfg.recalibrate_bn && st.step > 0) model.recalibrate_batch_norm(train_set);
  if (options.out_dir) {
    save(*options.out_dir / "checkpoint.bin");
    write_training_log(st.history, *options.out_dir / "train_log.csv");
  }
  return result;
}

void write_training_log(const std::vector<LossReport>& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "step,d_loss,g_loss,kl,recon,total_eg\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    out << i << ',' << r.d_loss << ',' << r.g_loss << ',' << r.kl << ',' << r.recon << ',' << r.total_eg << '\n';
  }
}

}  // namespace dgan
