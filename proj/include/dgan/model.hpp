// The network: sequence encoder, external-factor encoder, fusion,
// decoder/generator and joint map+code discriminator.
#pragma once

#include "dgan/layers.hpp"
#include "dgan/stmap.hpp"
#include "dgan/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dgan {

/// Which external-factor channels feed the factor encoder.
struct FactorSelection {
  bool poi = true;
  bool weekday = true;
  bool weather = true;

  bool any() const { return poi || weekday || weather; }
  bool operator==(const FactorSelection&) const = default;
};

struct ArchSpec {
  Index rows = 9;
  Index cols = 9;
  Index seq_len = 24;
  std::vector<Index> conv_lstm_filters{32, 16, 8, 4};
  Index conv3d_channels = 4;
  Index latent_dim = 64;
  Index factor_latent_dim = 16;
  Index mlp_hidden = 128;
  Index decoder_seed_steps = 4;
  Index decoder_seed_channels = 4;
  double dropout = 0.4;
  double leaky_slope = 0.2;
  double bn_momentum = 0.99;
  double bn_eps = 1e-3;
  FactorSelection factors;
  Index weather_arity = 2;
  /// Draw eps at prediction time instead of decoding the posterior mean.
  bool sample_at_inference = false;
  double init_scale = 1.0;
  double forget_bias = 1.0;

  void validate() const;
  Index regions() const { return rows * cols; }
  bool factors_enabled() const { return factors.any(); }
  /// Channels of one factor frame after selection.
  Index factor_channels() const;
  /// Width of the fused code (and of prior draws).
  Index fused_width() const { return latent_dim + (factors_enabled() ? factor_latent_dim : 0); }
  bool operator==(const ArchSpec&) const = default;
};

/// Gaussian posterior over a latent code plus one draw from it.
struct LatentCode {
  Vector mu;
  Vector sigma;
  Vector sample;
};

/// Graph-level posterior parameters, both (B, L).
struct Posterior {
  Var mu;
  Var logvar;
};

/// Network inputs for a batch of windows, time-major.
struct BatchInput {
  Index batch = 0;
  std::vector<Tensor> history;  // T x (B, H, W, 1), normalized
  std::vector<Tensor> factors;  // T x (B, H, W, C_f); empty when factors are off
  Tensor target;                // (B, H*W), normalized
};

/// Stochastic inputs for one training forward pass.
struct Noise {
  Tensor eps_x;  // (B, latent_dim)
  Tensor eps_f;  // (B, factor_latent_dim), empty when factors are off
  Tensor prior;  // (B, fused_width): z and FV*_cat share this draw
};

/// Values of the generator side of one training forward pass.
struct GeneratorPass {
  Posterior post_x;
  std::optional<Posterior> post_f;
  Var fv_cat;  // (B, fused)
  Var x_enc;   // (B, regions)
  Var prior;   // (B, fused)
  Var x_fake;  // (B, regions)
  Var target;  // (B, regions)
};

class DGanModel {
 public:
  DGanModel() = default;
  DGanModel(ArchSpec arch, std::uint64_t seed);

  const ArchSpec& arch() const { return arch_; }

  ParamSet& encoder() { return encoder_; }
  ParamSet& factor_encoder() { return factor_encoder_; }
  ParamSet& decoder() { return decoder_; }
  ParamSet& discriminator() { return discriminator_; }
  const ParamSet& encoder() const { return encoder_; }
  const ParamSet& factor_encoder() const { return factor_encoder_; }
  const ParamSet& decoder() const { return decoder_; }
  const ParamSet& discriminator() const { return discriminator_; }

  // Graph-level building blocks.
  Posterior encode(const Context& ctx, std::span<const Var> history);
  Posterior encode_factors(const Context& ctx, std::span<const Var> frames);
  Var decode(const Context& ctx, Var fv_cat);
  Var discriminate(const Context& ctx, Var map, Var code);

  /// E, factor encoder and G for one batch. The prior decode does not update
  /// batch-norm running statistics.
  GeneratorPass generate(const Context& ctx, const BatchInput& batch, const Noise& noise);

  Noise draw_noise(Index batch, Rng& rng) const;

  // Single-window inference API (normalized domain).
  LatentCode encode(std::span<const GridMatrix<double>> history, Rng& rng);
  LatentCode encode(std::span<const GridMatrix<double>> history, const Vector& eps);
  LatentCode encode_factors(std::span<const ExternalFactorFrame> frames, Rng& rng);
  LatentCode encode_factors(std::span<const ExternalFactorFrame> frames, const Vector& eps);
  GridMatrix<double> decode(const Vector& fv_cat);
  double discriminate(const GridMatrix<double>& map, const Vector& code);

  /// Autoregressive multi-step prediction from one history window. Factor
  /// frames are aligned with the history; frames past the end of `factors`
  /// repeat the last one. rng is only drawn from when sampling at inference.
  std::vector<GridMatrix<double>> predict(std::span<const GridMatrix<double>> history,
                                          std::span<const ExternalFactorFrame> factors, Index steps, Rng& rng);

  /// Batched rollout over dataset windows: result[k][i] is the (k+1)-step
  /// prediction for window i. Windows are processed in fixed-size chunks in
  /// order, so results do not depend on the caller.
  std::vector<std::vector<GridMatrix<double>>> predict_windows(const WindowedDataset& data, Index steps, Rng& rng);

  /// Replaces the encoder, factor-encoder and decoder batch-norm running
  /// statistics with averages of batch statistics over `data`, taken in
  /// chunks with the decoder fed the posterior mean as at inference.
  void recalibrate_batch_norm(const WindowedDataset& data, Index chunk = 256);

  /// Converts windows of a dataset into network inputs.
  BatchInput make_batch(const WindowedDataset& data, std::span<const std::size_t> indices) const;

 private:
  Posterior encode_head(const Context& ctx, ParamSet& params, const std::string& prefix, std::span<const Var> seq,
                        Index latent);
  Tensor factor_tensor(std::span<const ExternalFactorFrame* const> frames) const;
  std::vector<std::vector<GridMatrix<double>>> rollout(
      const std::vector<std::vector<GridMatrix<double>>>& histories,
      const std::vector<std::vector<const ExternalFactorFrame*>>& factor_tracks, Index steps, Rng& rng);

  ArchSpec arch_;
  ParamSet encoder_;
  ParamSet factor_encoder_;
  ParamSet decoder_;
  ParamSet discriminator_;
};

/// mu + exp(logvar / 2) * eps.
Var reparameterize(Var mu, Var logvar, Var eps);

/// i.i.d. standard normal vector of the given length.
Vector sample_prior(Index dim, Rng& rng);

}  // namespace dgan
