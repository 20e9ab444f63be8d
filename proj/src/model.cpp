#include "dgan/model.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dgan {

namespace {

constexpr Index kPredictChunk = 64;

layers::RecurrentStack stack_for(const ArchSpec& a, const std::string& prefix) {
  return {prefix, a.conv_lstm_filters, a.bn_momentum, a.bn_eps};
}

Context with_stats(const Context& ctx, bool update) {
  Context c = ctx;
  c.update_stats = update;
  return c;
}

Tensor maps_tensor(std::span<const GridMatrix<double>* const> maps, Index rows, Index cols) {
  const Index b = static_cast<Index>(maps.size());
  Tensor t({b, rows, cols, 1});
  for (Index i = 0; i < b; ++i) {
    const auto& m = *maps[static_cast<std::size_t>(i)];
    if (m.rows() != rows || m.cols() != cols)
      throw std::invalid_argument("map shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                  " does not match grid " + std::to_string(rows) + "x" + std::to_string(cols));
    t.data.segment(i * rows * cols, rows * cols) = Eigen::Map<const Vector>(m.data(), rows * cols);
  }
  return t;
}

}  // namespace

void ArchSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("arch: " + m); };
  if (rows < 1 || cols < 1) fail("grid must be at least 1x1");
  if (seq_len < 1) fail("seq_len must be >= 1");
  if (conv_lstm_filters.empty()) fail("need at least one ConvLSTM layer");
  for (auto f : conv_lstm_filters)
    if (f < 1) fail("ConvLSTM filter counts must be >= 1");
  if (conv3d_channels < 1) fail("conv3d_channels must be >= 1");
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (factors_enabled() && factor_latent_dim < 1) fail("factor_latent_dim must be >= 1");
  if (mlp_hidden < 1) fail("mlp_hidden must be >= 1");
  if (decoder_seed_steps < 1 || decoder_seed_channels < 1) fail("decoder seed volume must be non-empty");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) fail("bn_momentum must lie in [0, 1)");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
  if (factors.weather && weather_arity < 1) fail("weather_arity must be >= 1 when weather is used");
}

Index ArchSpec::factor_channels() const {
  return (factors.poi ? 1 : 0) + (factors.weekday ? 1 : 0) + (factors.weather ? weather_arity : 0);
}

Var reparameterize(Var mu, Var logvar, Var eps) {
  Var sigma = ops::exp(ops::scale(logvar, 0.5));
  return ops::add(mu, ops::mul(sigma, eps));
}

Vector sample_prior(Index dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("sample_prior: dim must be >= 1");
  return Tensor::normal({dim}, 1.0, rng).data;
}

DGanModel::DGanModel(ArchSpec arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  Rng rng(seed);
  const layers::InitOptions opt{arch_.forget_bias, arch_.init_scale};
  const Index hw = arch_.regions();
  const Index last = arch_.conv_lstm_filters.back();
  auto init_encoder = [&](ParamSet& p, const std::string& prefix, Index in_ch, Index latent) {
    stack_for(arch_, prefix).init(p, in_ch, rng, opt);
    layers::init_conv3d(p, prefix + ".conv3d", last, arch_.conv3d_channels, rng, opt);
    layers::init_dense(p, prefix + ".fc", arch_.seq_len * hw * arch_.conv3d_channels, arch_.mlp_hidden, rng, opt);
    layers::init_dense(p, prefix + ".mu", arch_.mlp_hidden, latent, rng, opt);
    layers::init_dense(p, prefix + ".logvar", arch_.mlp_hidden, latent, rng, opt);
  };
  init_encoder(encoder_, "enc", 1, arch_.latent_dim);
  if (arch_.factors_enabled()) init_encoder(factor_encoder_, "fac", arch_.factor_channels(), arch_.factor_latent_dim);

  layers::init_dense(decoder_, "dec.fc", arch_.fused_width(), arch_.mlp_hidden, rng, opt);
  layers::init_dense(decoder_, "dec.seed", arch_.mlp_hidden,
                     arch_.decoder_seed_steps * hw * arch_.decoder_seed_channels, rng, opt);
  stack_for(arch_, "dec").init(decoder_, arch_.decoder_seed_channels, rng, opt);
  layers::init_conv3d(decoder_, "dec.conv3d", last, 1, rng, opt);

  stack_for(arch_, "disc").init(discriminator_, 1 + arch_.fused_width(), rng, opt);
  layers::init_conv3d(discriminator_, "disc.conv3d", last, arch_.conv3d_channels, rng, opt);
  layers::init_dense(discriminator_, "disc.out", hw * arch_.conv3d_channels, 1, rng, opt);
}

Posterior DGanModel::encode_head(const Context& ctx, ParamSet& params, const std::string& prefix,
                                 std::span<const Var> seq, Index latent) {
  if (static_cast<Index>(seq.size()) != arch_.seq_len)
    throw std::invalid_argument(prefix + ": expected " + std::to_string(arch_.seq_len) + " steps, got " +
                                std::to_string(seq.size()));
  Var volume = stack_for(arch_, prefix).forward(ctx, params, seq);
  Var features = ops::leaky_relu(layers::conv3d(ctx, params, prefix + ".conv3d", volume), arch_.leaky_slope);
  Var per_sample = ops::swap_leading(features);
  const Index batch = per_sample.shape()[0];
  Var flat = ops::reshape(per_sample, {batch, per_sample.value().size() / batch});
  Var h = ops::leaky_relu(layers::dense(ctx, params, prefix + ".fc", flat), arch_.leaky_slope);
  h = ops::dropout(ctx, h, arch_.dropout);
  Posterior post{layers::dense(ctx, params, prefix + ".mu", h), layers::dense(ctx, params, prefix + ".logvar", h)};
  if (post.mu.shape()[1] != latent) throw std::logic_error(prefix + ": latent width mismatch");
  return post;
}

Posterior DGanModel::encode(const Context& ctx, std::span<const Var> history) {
  for (const auto& h : history) {
    const Shape& s = h.shape();
    if (s.size() != 4 || s[1] != arch_.rows || s[2] != arch_.cols || s[3] != 1)
      throw std::invalid_argument("encode: history map shape " + shape_string(s) + " does not match grid");
  }
  return encode_head(ctx, encoder_, "enc", history, arch_.latent_dim);
}

Posterior DGanModel::encode_factors(const Context& ctx, std::span<const Var> frames) {
  if (!arch_.factors_enabled()) throw std::logic_error("encode_factors: factor branch is disabled");
  for (const auto& f : frames) {
    const Shape& s = f.shape();
    if (s.size() != 4 || s[1] != arch_.rows || s[2] != arch_.cols || s[3] != arch_.factor_channels())
      throw std::invalid_argument("encode_factors: frame shape " + shape_string(s) + " does not match arch");
  }
  return encode_head(ctx, factor_encoder_, "fac", frames, arch_.factor_latent_dim);
}

Var DGanModel::decode(const Context& ctx, Var fv_cat) {
  const Shape& s = fv_cat.shape();
  if (s.size() != 2 || s[1] != arch_.fused_width())
    throw std::invalid_argument("decode: code shape " + shape_string(s) + ", expected width " +
                                std::to_string(arch_.fused_width()));
  const Index batch = s[0];
  Var h = ops::leaky_relu(layers::dense(ctx, decoder_, "dec.fc", fv_cat), arch_.leaky_slope);
  h = ops::dropout(ctx, h, arch_.dropout);
  Var seed = ops::leaky_relu(layers::dense(ctx, decoder_, "dec.seed", h), arch_.leaky_slope);
  seed = ops::dropout(ctx, seed, arch_.dropout);
  seed = ops::reshape(seed, {batch, arch_.decoder_seed_steps, arch_.rows, arch_.cols, arch_.decoder_seed_channels});
  Var time_major = ops::swap_leading(seed);
  std::vector<Var> steps;
  for (Index t = 0; t < arch_.decoder_seed_steps; ++t) steps.push_back(ops::unstack(time_major, t));
  Var volume = stack_for(arch_, "dec").forward(ctx, decoder_, steps);
  Var out = layers::conv3d(ctx, decoder_, "dec.conv3d", volume);
  Var last = ops::unstack(out, arch_.decoder_seed_steps - 1);
  return ops::sigmoid(ops::reshape(last, {batch, arch_.regions()}));
}

Var DGanModel::discriminate(const Context& ctx, Var map, Var code) {
  const Shape& ms = map.shape();
  const Shape& cs = code.shape();
  if (ms.size() != 2 || ms[1] != arch_.regions() || cs.size() != 2 || cs[1] != arch_.fused_width() ||
      cs[0] != ms[0])
    throw std::invalid_argument("discriminate: map " + shape_string(ms) + " / code " + shape_string(cs) +
                                " do not match arch");
  const Index batch = ms[0];
  Context dctx = ctx;
  dctx.dropout_enabled = false;
  const Var parts[] = {ops::reshape(map, {batch, arch_.rows, arch_.cols, 1}),
                       ops::tile_spatial(code, arch_.rows, arch_.cols)};
  const Var y[] = {ops::concat_channels(parts)};
  Var volume = stack_for(arch_, "disc").forward(dctx, discriminator_, y);
  Var f = ops::leaky_relu(layers::conv3d(dctx, discriminator_, "disc.conv3d", volume), arch_.leaky_slope);
  Var flat = ops::reshape(ops::unstack(f, 0), {batch, arch_.regions() * arch_.conv3d_channels});
  return ops::sigmoid(layers::dense(dctx, discriminator_, "disc.out", flat));
}

Noise DGanModel::draw_noise(Index batch, Rng& rng) const {
  Noise n;
  n.eps_x = Tensor::normal({batch, arch_.latent_dim}, 1.0, rng);
  if (arch_.factors_enabled()) n.eps_f = Tensor::normal({batch, arch_.factor_latent_dim}, 1.0, rng);
  n.prior = Tensor::normal({batch, arch_.fused_width()}, 1.0, rng);
  return n;
}

GeneratorPass DGanModel::generate(const Context& ctx, const BatchInput& batch, const Noise& noise) {
  Graph& g = ctx.graph;
  GeneratorPass pass;
  std::vector<Var> hist;
  for (const auto& t : batch.history) hist.push_back(g.constant(t));
  pass.post_x = encode(ctx, hist);
  Var fv = reparameterize(pass.post_x.mu, pass.post_x.logvar, g.constant(noise.eps_x));
  if (arch_.factors_enabled()) {
    std::vector<Var> frames;
    for (const auto& t : batch.factors) frames.push_back(g.constant(t));
    pass.post_f = encode_factors(ctx, frames);
    Var fv_f = reparameterize(pass.post_f->mu, pass.post_f->logvar, g.constant(noise.eps_f));
    const Var parts[] = {fv, fv_f};
    pass.fv_cat = ops::concat_channels(parts);
  } else {
    pass.fv_cat = fv;
  }
  pass.x_enc = decode(ctx, pass.fv_cat);
  pass.prior = g.constant(noise.prior);
  pass.x_fake = decode(with_stats(ctx, false), pass.prior);
  pass.target = g.constant(batch.target);
  return pass;
}

Tensor DGanModel::factor_tensor(std::span<const ExternalFactorFrame* const> frames) const {
  const Index b = static_cast<Index>(frames.size());
  const Index h = arch_.rows, w = arch_.cols, c = arch_.factor_channels();
  Tensor t({b, h, w, c});
  auto M = t.matrix();
  for (Index i = 0; i < b; ++i) {
    const auto& f = *frames[static_cast<std::size_t>(i)];
    if (arch_.factors.poi && (f.poi.rows() != h || f.poi.cols() != w))
      throw std::invalid_argument("factor frame: PoI shape does not match grid");
    if (arch_.factors.weather && f.weather.size() != arch_.weather_arity)
      throw std::invalid_argument("factor frame: weather arity " + std::to_string(f.weather.size()) +
                                  " differs from training-time arity " + std::to_string(arch_.weather_arity));
    for (Index r = 0; r < h; ++r)
      for (Index q = 0; q < w; ++q) {
        auto row = M.row((i * h + r) * w + q);
        Index k = 0;
        if (arch_.factors.poi) row(k++) = f.poi(r, q);
        if (arch_.factors.weekday) row(k++) = f.is_weekend;
        if (arch_.factors.weather)
          for (Index j = 0; j < arch_.weather_arity; ++j) row(k++) = f.weather[j];
      }
  }
  return t;
}

BatchInput DGanModel::make_batch(const WindowedDataset& data, std::span<const std::size_t> indices) const {
  if (data.window() != arch_.seq_len)
    throw std::invalid_argument("dataset window " + std::to_string(data.window()) + " differs from seq_len " +
                                std::to_string(arch_.seq_len));
  if (arch_.factors_enabled() && !data.has_factors())
    throw std::invalid_argument("model uses external factors but the dataset has none");
  BatchInput in;
  in.batch = static_cast<Index>(indices.size());
  std::vector<const GridMatrix<double>*> maps(indices.size());
  std::vector<const ExternalFactorFrame*> frames(indices.size());
  for (Index t = 0; t < arch_.seq_len; ++t) {
    for (std::size_t i = 0; i < indices.size(); ++i) maps[i] = &data.history(indices[i], t).values;
    in.history.push_back(maps_tensor(maps, arch_.rows, arch_.cols));
    if (arch_.factors_enabled()) {
      for (std::size_t i = 0; i < indices.size(); ++i) frames[i] = &data.factor(indices[i], t);
      in.factors.push_back(factor_tensor(frames));
    }
  }
  for (std::size_t i = 0; i < indices.size(); ++i) maps[i] = &data.target(indices[i]).values;
  Tensor target = maps_tensor(maps, arch_.rows, arch_.cols);
  in.target = Tensor({in.batch, arch_.regions()}, std::move(target.data));
  return in;
}

namespace {

LatentCode to_code(const Posterior& post, const Vector& eps) {
  LatentCode code;
  code.mu = post.mu.value().data;
  code.sigma = (0.5 * post.logvar.value().data.array()).exp().matrix();
  if (eps.size() != code.mu.size()) throw std::invalid_argument("encode: eps width mismatch");
  code.sample = code.mu + code.sigma.cwiseProduct(eps);
  return code;
}

}  // namespace

LatentCode DGanModel::encode(std::span<const GridMatrix<double>> history, const Vector& eps) {
  Graph g;
  Context ctx{g};
  std::vector<Var> hist;
  for (const auto& m : history) {
    const GridMatrix<double>* p[] = {&m};
    hist.push_back(g.constant(maps_tensor(p, arch_.rows, arch_.cols)));
  }
  return to_code(encode(ctx, hist), eps);
}

LatentCode DGanModel::encode(std::span<const GridMatrix<double>> history, Rng& rng) {
  return encode(history, sample_prior(arch_.latent_dim, rng));
}

LatentCode DGanModel::encode_factors(std::span<const ExternalFactorFrame> frames, const Vector& eps) {
  Graph g;
  Context ctx{g};
  std::vector<Var> vars;
  for (const auto& f : frames) {
    const ExternalFactorFrame* p[] = {&f};
    vars.push_back(g.constant(factor_tensor(p)));
  }
  return to_code(encode_factors(ctx, vars), eps);
}

LatentCode DGanModel::encode_factors(std::span<const ExternalFactorFrame> frames, Rng& rng) {
  return encode_factors(frames, sample_prior(arch_.factor_latent_dim, rng));
}

GridMatrix<double> DGanModel::decode(const Vector& fv_cat) {
  Graph g;
  Context ctx{g};
  Var out = decode(ctx, g.constant(Tensor({1, fv_cat.size()}, fv_cat)));
  return Eigen::Map<const GridMatrix<double>>(out.value().data.data(), arch_.rows, arch_.cols);
}

double DGanModel::discriminate(const GridMatrix<double>& map, const Vector& code) {
  Graph g;
  Context ctx{g};
  Var m = g.constant(Tensor({1, map.size()}, Eigen::Map<const Vector>(map.data(), map.size())));
  Var c = g.constant(Tensor({1, code.size()}, code));
  return discriminate(ctx, m, c).value().item();
}

std::vector<std::vector<GridMatrix<double>>> DGanModel::rollout(
    const std::vector<std::vector<GridMatrix<double>>>& histories,
    const std::vector<std::vector<const ExternalFactorFrame*>>& factor_tracks, Index steps, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("predict: steps must be >= 1");
  const std::size_t n = histories.size();
  const auto T = static_cast<std::size_t>(arch_.seq_len);
  std::vector<std::vector<GridMatrix<double>>> out(static_cast<std::size_t>(steps),
                                                   std::vector<GridMatrix<double>>(n));
  for (std::size_t begin = 0; begin < n; begin += kPredictChunk) {
    const std::size_t end = std::min(n, begin + static_cast<std::size_t>(kPredictChunk));
    const auto b = static_cast<Index>(end - begin);
    std::vector<std::vector<GridMatrix<double>>> windows(histories.begin() + static_cast<std::ptrdiff_t>(begin),
                                                         histories.begin() + static_cast<std::ptrdiff_t>(end));
    for (Index k = 0; k < steps; ++k) {
      Graph g;
      Context ctx{g};
      std::vector<Var> hist;
      std::vector<const GridMatrix<double>*> maps(static_cast<std::size_t>(b));
      for (std::size_t t = 0; t < T; ++t) {
        for (Index i = 0; i < b; ++i) {
          const auto& w = windows[static_cast<std::size_t>(i)];
          maps[static_cast<std::size_t>(i)] = &w[w.size() - T + t];
        }
        hist.push_back(g.constant(maps_tensor(maps, arch_.rows, arch_.cols)));
      }
      Posterior px = encode(ctx, hist);
      Vector code_x = px.mu.value().data;
      if (arch_.sample_at_inference) {
        const Vector eps = sample_prior(code_x.size(), rng);
        code_x += (0.5 * px.logvar.value().data.array()).exp().matrix().cwiseProduct(eps);
      }
      Tensor fused({b, arch_.fused_width()});
      fused.matrix().leftCols(arch_.latent_dim) = Eigen::Map<const RowMatrix>(code_x.data(), b, arch_.latent_dim);
      if (arch_.factors_enabled()) {
        std::vector<Var> frames;
        std::vector<const ExternalFactorFrame*> fr(static_cast<std::size_t>(b));
        for (std::size_t t = 0; t < T; ++t) {
          for (Index i = 0; i < b; ++i) {
            const auto& track = factor_tracks[begin + static_cast<std::size_t>(i)];
            fr[static_cast<std::size_t>(i)] = track[std::min(track.size() - 1, static_cast<std::size_t>(k) + t)];
          }
          frames.push_back(g.constant(factor_tensor(fr)));
        }
        Posterior pf = encode_factors(ctx, frames);
        Vector code_f = pf.mu.value().data;
        if (arch_.sample_at_inference) {
          const Vector eps = sample_prior(code_f.size(), rng);
          code_f += (0.5 * pf.logvar.value().data.array()).exp().matrix().cwiseProduct(eps);
        }
        fused.matrix().rightCols(arch_.factor_latent_dim) =
            Eigen::Map<const RowMatrix>(code_f.data(), b, arch_.factor_latent_dim);
      }
      Var pred = decode(ctx, g.constant(std::move(fused)));
      const auto& pv = pred.value().data;
      for (Index i = 0; i < b; ++i) {
        GridMatrix<double> m =
            Eigen::Map<const GridMatrix<double>>(pv.data() + i * arch_.regions(), arch_.rows, arch_.cols);
        windows[static_cast<std::size_t>(i)].push_back(m);
        out[static_cast<std::size_t>(k)][begin + static_cast<std::size_t>(i)] = std::move(m);
      }
    }
  }
  return out;
}

void DGanModel::recalibrate_batch_norm(const WindowedDataset& data, Index chunk) {
  if (chunk < 1) throw std::invalid_argument("recalibrate: chunk must be >= 1");
  std::vector<std::size_t> idx;
  double seen = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(chunk));
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const BatchInput batch = make_batch(data, idx);
    const auto n = static_cast<double>(idx.size());
    Graph g;
    Context ctx{g, true};
    ctx.dropout_enabled = false;
    ctx.stats_momentum = seen / (seen + n);  // running average weighted by chunk size
    std::vector<Var> hist;
    for (const auto& t : batch.history) hist.push_back(g.constant(t));
    Var code = encode(ctx, hist).mu;
    if (arch_.factors_enabled()) {
      std::vector<Var> frames;
      for (const auto& t : batch.factors) frames.push_back(g.constant(t));
      const Var parts[] = {code, encode_factors(ctx, frames).mu};
      code = ops::concat_channels(parts);
    }
    decode(ctx, code);
    seen += n;
  }
}

std::vector<GridMatrix<double>> DGanModel::predict(std::span<const GridMatrix<double>> history,
                                                   std::span<const ExternalFactorFrame> factors, Index steps,
                                                   Rng& rng) {
  if (static_cast<Index>(history.size()) != arch_.seq_len)
    throw std::invalid_argument("predict: history must hold seq_len maps");
  std::vector<std::vector<const ExternalFactorFrame*>> tracks(1);
  if (arch_.factors_enabled()) {
    if (static_cast<Index>(factors.size()) < arch_.seq_len)
      throw std::invalid_argument("predict: need a factor frame for every history slot");
    for (const auto& f : factors) tracks[0].push_back(&f);
  }
  auto all = rollout({std::vector<GridMatrix<double>>(history.begin(), history.end())}, tracks, steps, rng);
  std::vector<GridMatrix<double>> out;
  for (auto& step : all) out.push_back(std::move(step[0]));
  return out;
}

std::vector<std::vector<GridMatrix<double>>> DGanModel::predict_windows(const WindowedDataset& data, Index steps,
                                                                        Rng& rng) {
  if (data.window() != arch_.seq_len) throw std::invalid_argument("predict: dataset window differs from seq_len");
  if (arch_.factors_enabled() && !data.has_factors())
    throw std::invalid_argument("predict: model uses external factors but the dataset has none");
  std::vector<std::vector<GridMatrix<double>>> histories(data.size());
  std::vector<std::vector<const ExternalFactorFrame*>> tracks(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Index t = 0; t < arch_.seq_len; ++t) histories[i].push_back(data.history(i, t).values);
    if (arch_.factors_enabled()) {
      const auto& fs = data.factors();
      for (std::size_t s = data.start(i); s < fs.size() && s < data.start(i) + static_cast<std::size_t>(arch_.seq_len + steps); ++s)
        tracks[i].push_back(&fs[s]);
    }
  }
  return rollout(histories, tracks, steps, rng);
}

}  // namespace dgan
