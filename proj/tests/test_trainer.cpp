#include "doctest.h"

#include "dgan/checkpoint.hpp"
#include "dgan/trainer.hpp"
#include "helpers.hpp"
#include "model_fixtures.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dgan;
using testutil::tiny_arch;

namespace {

WindowedDataset counting_windows(std::size_t n) {
  auto seq = std::make_shared<STSequence>(1, 1, 0);
  for (std::size_t i = 0; i <= n; ++i) seq->push_back(GridMatrix<double>::Constant(1, 1, static_cast<double>(i)));
  return window(seq, nullptr, 1);
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 2;
  c.optimizer = "adam";
  c.learning_rate = 1e-3;
  c.seed = 11;
  c.recon_weight = 10.0;
  return c;
}

std::map<std::string, Vector> snapshot(ParamSet& ps) {
  std::map<std::string, Vector> out;
  for (auto& [n, p] : ps) out[n] = p.value.data;
  return out;
}

bool same(ParamSet& ps, const std::map<std::string, Vector>& snap) {
  for (auto& [n, p] : ps)
    if (p.value.data != snap.at(n)) return false;
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("chronological split") {
  auto [tr, te] = split(counting_windows(100), 0.9);
  CHECK(tr.size() == 90);
  CHECK(te.size() == 10);
  auto [a, b] = split(counting_windows(10), 0.5);
  CHECK(a.size() == 5);
  CHECK(b.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) CHECK(a.target_index(i) < b.target_index(j));
  CHECK_THROWS_AS(split(counting_windows(1), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(split(counting_windows(1), 0.99), std::invalid_argument);
  CHECK_THROWS_AS(split(counting_windows(10), 1.0), std::invalid_argument);
}

TEST_CASE("scaler is fitted on the training region only") {
  auto seq = std::make_shared<STSequence>(1, 1, 0);
  for (int i = 0; i < 21; ++i) seq->push_back(GridMatrix<double>::Constant(1, 1, i < 15 ? i : 1000.0));
  // 20 windows of T=1; 0.5 -> targets 1..10 train
  auto p = prepare(seq, nullptr, 1, 0.5);
  CHECK(p.scaler.data_min == 0.0);
  CHECK(p.scaler.data_max == 10.0);
  CHECK(p.train.size() == 10);
  CHECK(p.test.sequence()[20].values(0, 0) == 1.0);  // clipped
}

TEST_CASE("sgd_step") {
  Vector th = Vector::Constant(1, 1.0);
  sgd_step(th, Vector::Constant(1, 2.0), 0.1);
  CHECK(th[0] == doctest::Approx(0.8).epsilon(1e-15));
  Vector fixed = Vector::LinSpaced(4, -1, 1);
  const Vector before = fixed;
  sgd_step(fixed, Vector::Zero(4), 0.1);
  CHECK(fixed == before);

  Vector g(4);
  g << 2.0, -2.0, 2.0, 2.0;
  double brute = 0.0;
  for (Index i = 0; i < 4; ++i) brute += g[i] * g[i];
  brute = std::sqrt(brute);
  REQUIRE(brute == 4.0);
  Vector t = Vector::Zero(4);
  sgd_step(t, g, 1.0, 1.0);
  for (Index i = 0; i < 4; ++i) CHECK(t[i] == doctest::Approx(-g[i] / brute).epsilon(1e-15));
  Vector u = Vector::Zero(4);
  sgd_step(u, g, 1.0, 10.0);  // below the threshold: untouched
  CHECK(u == -g);

  Vector bad = Vector::Zero(2);
  bad[1] = std::nan("");
  CHECK_THROWS_WITH(sgd_step(t, Vector(bad), 0.1, std::nullopt, 7), "divergence detected at step 7");
}

TEST_CASE("optimizer clips by the global norm across a group") {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.grad_clip_norm = 5.0;
  Parameter a, b, frozen;
  a.value = Tensor::zeros({1});
  b.value = Tensor::zeros({1});
  frozen.value = Tensor::zeros({1});
  frozen.trainable = false;
  a.grad = Vector::Constant(1, 6.0);
  b.grad = Vector::Constant(1, 8.0);
  frozen.grad = Vector::Constant(1, 1.0);
  Optimizer opt(c);
  opt.step({&a, &b, &frozen}, 0);
  CHECK(a.value.data[0] == doctest::Approx(-3.0));
  CHECK(b.value.data[0] == doctest::Approx(-4.0));
  CHECK(frozen.value.data[0] == 0.0);
}

TEST_CASE("each player's update only moves its own parameters") {
  auto data = testutil::synth_data(4, 4, 3, 40);
  DGanModel m(tiny_arch(), 2);
  const std::size_t idx[] = {0, 1, 2, 3};
  const auto batch = m.make_batch(data.train, idx);
  Rng rng(5);
  const auto noise = m.draw_noise(4, rng);
  TrainConfig cfg = small_config();
  Optimizer opt_d(cfg), opt_eg(cfg);

  auto enc = snapshot(m.encoder());
  auto fac = snapshot(m.factor_encoder());
  auto dec = snapshot(m.decoder());
  auto disc = snapshot(m.discriminator());
  {
    Graph g;
    Tensor fake = Tensor::constant({4, 16}, 0.5);
    for (auto* p : d_params(m)) p->zero_grad();
    g.backward(testutil::d_loss(g, m, batch.target, fake, fake, noise.prior, noise.prior));
    opt_d.step(d_params(m), 0);
  }
  CHECK(same(m.encoder(), enc));
  CHECK(same(m.factor_encoder(), fac));
  CHECK(same(m.decoder(), dec));
  CHECK_FALSE(same(m.discriminator(), disc));

  disc = snapshot(m.discriminator());
  {
    Graph g;
    for (auto* p : eg_params(m)) p->zero_grad();
    for (auto* p : d_params(m)) p->zero_grad();
    g.backward(testutil::eg_loss(g, m, batch, noise, {cfg.kl_weight, cfg.recon_weight}));
    for (auto* p : d_params(m)) CHECK(p->grad.isZero(0.0));
    opt_eg.step(eg_params(m), 1);
  }
  CHECK(same(m.discriminator(), disc));
  CHECK_FALSE(same(m.encoder(), enc));
  CHECK_FALSE(same(m.factor_encoder(), fac));
  CHECK_FALSE(same(m.decoder(), dec));
}

TEST_CASE("zero epochs returns the initialized model") {
  auto data = testutil::synth_data(4, 4, 3, 40);
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  auto res = train(tiny_arch(), cfg, data.train, data.scaler);
  CHECK(res.state.history.empty());
  CHECK(res.state.step == 0);
  DGanModel init(tiny_arch(), cfg.seed);
  CHECK(same(res.state.checkpoint.model.decoder(), snapshot(init.decoder())));
  CHECK(same(res.state.checkpoint.model.encoder(), snapshot(init.encoder())));
}

TEST_CASE("training is deterministic and logs every batch") {
  auto data = testutil::synth_data(4, 4, 3, 40);
  REQUIRE(data.train.size() == 29);
  TrainConfig cfg = small_config();
  const auto d1 = testutil::scratch("train_a");
  const auto d2 = testutil::scratch("train_b");
  auto r1 = train(tiny_arch(), cfg, data.train, data.scaler, {d1, "abc", {}});
  auto r2 = train(tiny_arch(), cfg, data.train, data.scaler, {d2, "abc", {}});
  CHECK(r1.state.history.size() == 2 * 8);  // ceil(29 / 4) batches per epoch
  CHECK(r1.state.epoch == 2);
  CHECK(slurp(d1 / "train_log.csv") == slurp(d2 / "train_log.csv"));
  CHECK(slurp(d1 / "checkpoint.bin") == slurp(d2 / "checkpoint.bin"));
  for (auto& [n, p] : r1.state.checkpoint.model.decoder()) CHECK(p.value.data.allFinite());

  cfg.seed = 12;
  auto r3 = train(tiny_arch(), cfg, data.train, data.scaler);
  CHECK(r3.state.history.front().total_eg != r1.state.history.front().total_eg);

  const auto ck = load_checkpoint(d1 / "checkpoint.bin", {4, 4, std::string("abc")});
  CHECK(ck.epoch == 2);
  CHECK(ck.seed == 11);
  CHECK_THROWS(load_checkpoint(d1 / "checkpoint.bin", {4, 4, std::string("other")}));
}

TEST_CASE("max_steps and periodic checkpoints") {
  auto data = testutil::synth_data(4, 4, 3, 40);
  TrainConfig cfg = small_config();
  cfg.epochs = 3;
  cfg.checkpoint_every = 1;
  const auto dir = testutil::scratch("train_ckpt");
  auto r = train(tiny_arch(), cfg, data.train, data.scaler, {dir, "", {}});
  for (int e = 1; e <= 3; ++e) CHECK(std::filesystem::exists(dir / ("checkpoint_epoch" + std::to_string(e) + ".bin")));
  CHECK(r.state.history.size() == 24);

  cfg.max_steps = 5;
  cfg.checkpoint_every = 0;
  auto s = train(tiny_arch(), cfg, data.train, data.scaler);
  CHECK(s.state.history.size() == 5);
  CHECK(s.state.step == 5);
}

TEST_CASE("divergence aborts and keeps the last good parameters") {
  auto data = testutil::synth_data(4, 4, 3, 40);
  TrainConfig cfg = small_config();
  cfg.optimizer = "sgd";
  cfg.learning_rate = 1e200;
  const auto dir = testutil::scratch("train_div");
  CHECK_THROWS_WITH_AS(train(tiny_arch(), cfg, data.train, data.scaler, {dir, "", {}}),
                       doctest::Contains("divergence detected at step"), std::runtime_error);
  REQUIRE(std::filesystem::exists(dir / "checkpoint_last_good.bin"));
  CHECK(std::filesystem::exists(dir / "train_log.csv"));
  const auto ck = load_checkpoint(dir / "checkpoint_last_good.bin");
  for (auto* ps : {&ck.model.encoder(), &ck.model.decoder(), &ck.model.discriminator()})
    for (auto& [n, p] : *ps) CHECK(p.value.data.allFinite());
}

TEST_CASE("batch-norm recalibration matches whole-set batch statistics") {
  auto data = testutil::synth_data(4, 4, 3, 60);
  TrainConfig cfg = small_config();
  cfg.recalibrate_bn = false;
  auto r = train(tiny_arch(), cfg, data.train, data.scaler);
  DGanModel m = r.state.checkpoint.model;
  m.recalibrate_batch_norm(data.train, 1000);

  std::vector<std::size_t> idx(data.train.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = m.make_batch(data.train, idx);
  Graph g;
  Context ctx{g, true};
  ctx.update_stats = false;
  std::vector<Var> hist;
  for (const auto& t : batch.history) hist.push_back(g.constant(t));
  std::vector<Var> frames;
  for (const auto& t : batch.factors) frames.push_back(g.constant(t));
  const Var parts[] = {m.encode(ctx, hist).mu, m.encode_factors(ctx, frames).mu};
  const Vector batch_stats = m.decode(ctx, ops::concat_channels(parts)).value().data;

  Rng rng(1);
  const auto pred = m.predict_windows(data.train, 1, rng)[0];
  double worst = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    worst = std::max(worst, (Eigen::Map<const Vector>(pred[i].data(), 16) - batch_stats.segment(i * 16, 16))
                                .cwiseAbs()
                                .maxCoeff());
  CHECK(worst < 1e-2);
}
