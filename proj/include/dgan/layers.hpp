// Layer building blocks on top of the tensor graph. Each layer owns a set of
// named entries in a ParamSet; forward functions look them up by prefix.
#pragma once

#include "dgan/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace dgan::layers {

struct InitOptions {
  double forget_bias = 1.0;
  double weight_scale = 1.0;  // multiplies the 1/sqrt(fan_in) stddev
};

Parameter& lookup(ParamSet& params, const std::string& name);

// Fully connected: x (rows, in) -> (rows, out).
void init_dense(ParamSet& params, const std::string& name, Index in, Index out, Rng& rng,
                const InitOptions& opt = {});
Var dense(const Context& ctx, ParamSet& params, const std::string& name, Var x);

struct ConvLstmState {
  Var hidden;
  Var cell;
};

void init_conv_lstm(ParamSet& params, const std::string& name, Index in_channels, Index hidden, Rng& rng,
                    const InitOptions& opt = {});
Index conv_lstm_hidden(ParamSet& params, const std::string& name);
ConvLstmState conv_lstm_zero_state(Graph& graph, Index n, Index rows, Index cols, Index hidden);

/// One ConvLSTM transition. x: (N, H, W, C_in); state tensors (N, H, W, C_h).
/// Gates use 3x3 convolutions over the concatenation [x, h].
ConvLstmState conv_lstm_step(const Context& ctx, ParamSet& params, const std::string& name, Var x,
                             const ConvLstmState& state);

/// Runs the step over a time-ordered list of inputs from a zero state and
/// returns every hidden output.
std::vector<Var> conv_lstm_sequence(const Context& ctx, ParamSet& params, const std::string& name,
                                    std::span<const Var> xs);

void init_batch_norm(ParamSet& params, const std::string& name, Index channels);
Var batch_norm(const Context& ctx, ParamSet& params, const std::string& name, Var x, double momentum, double eps);

void init_conv3d(ParamSet& params, const std::string& name, Index in_channels, Index out_channels, Rng& rng,
                 const InitOptions& opt = {});
/// x: (D, B, H, W, C_in) -> (D, B, H, W, C_out), with bias.
Var conv3d(const Context& ctx, ParamSet& params, const std::string& name, Var x);

/// Stacked ConvLSTM layers with batch normalization after each.
struct RecurrentStack {
  std::string prefix;
  std::vector<Index> filters;
  double bn_momentum = 0.99;
  double bn_eps = 1e-3;

  void init(ParamSet& params, Index in_channels, Rng& rng, const InitOptions& opt = {}) const;
  /// xs: T tensors (B, H, W, C). Returns the time-major volume (T, B, H, W, filters.back()).
  Var forward(const Context& ctx, ParamSet& params, std::span<const Var> xs) const;
};

}  // namespace dgan::layers
