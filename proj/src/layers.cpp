#include "dgan/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dgan::layers {

Parameter& lookup(ParamSet& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("missing parameter '" + name + "'");
  return it->second;
}

namespace {

Parameter trainable(Tensor t) {
  Parameter p;
  p.value = std::move(t);
  p.zero_grad();
  return p;
}

Parameter buffer(Tensor t) {
  Parameter p = trainable(std::move(t));
  p.trainable = false;
  return p;
}

}  // namespace

void init_dense(ParamSet& params, const std::string& name, Index in, Index out, Rng& rng, const InitOptions& opt) {
  const double std = opt.weight_scale / std::sqrt(static_cast<double>(in));
  params[name + ".weight"] = trainable(Tensor::normal({in, out}, std, rng));
  params[name + ".bias"] = trainable(Tensor::zeros({out}));
}

Var dense(const Context& ctx, ParamSet& params, const std::string& name, Var x) {
  Var w = ctx.param(lookup(params, name + ".weight"));
  Var b = ctx.param(lookup(params, name + ".bias"));
  return ops::add_bias(ops::matmul(x, w), b);
}

void init_conv_lstm(ParamSet& params, const std::string& name, Index in_channels, Index hidden, Rng& rng,
                    const InitOptions& opt) {
  const Index fan_in = 9 * (in_channels + hidden);
  const double std = opt.weight_scale / std::sqrt(static_cast<double>(fan_in));
  params[name + ".kernel"] = trainable(Tensor::normal({fan_in, 4 * hidden}, std, rng));
  Tensor bias = Tensor::zeros({4 * hidden});
  bias.data.segment(hidden, hidden).setConstant(opt.forget_bias);
  params[name + ".bias"] = trainable(std::move(bias));
}

Index conv_lstm_hidden(ParamSet& params, const std::string& name) {
  return lookup(params, name + ".bias").value.size() / 4;
}

ConvLstmState conv_lstm_zero_state(Graph& graph, Index n, Index rows, Index cols, Index hidden) {
  return {graph.constant(Tensor::zeros({n, rows, cols, hidden})), graph.constant(Tensor::zeros({n, rows, cols, hidden}))};
}

ConvLstmState conv_lstm_step(const Context& ctx, ParamSet& params, const std::string& name, Var x,
                             const ConvLstmState& state) {
  const Shape& xs = x.shape();
  const Shape& hs = state.hidden.shape();
  if (xs.size() != 4 || hs.size() != 4 || xs[0] != hs[0] || xs[1] != hs[1] || xs[2] != hs[2] ||
      state.cell.shape() != hs)
    throw std::invalid_argument("conv_lstm_step: input " + shape_string(xs) + " incompatible with state " +
                                shape_string(hs));
  Parameter& kernel = lookup(params, name + ".kernel");
  const Index hidden = hs[3];
  if (kernel.value.shape[0] != 9 * (xs[3] + hidden) || kernel.value.shape[1] != 4 * hidden)
    throw std::invalid_argument("conv_lstm_step: kernel " + shape_string(kernel.value.shape) +
                                " does not match input/state channels");
  const Var joined[] = {x, state.hidden};
  Var z = ops::conv2d(ops::concat_channels(joined), ctx.param(kernel));
  z = ops::add_bias(z, ctx.param(lookup(params, name + ".bias")));
  Var hc = ops::lstm_gates(z, state.cell);
  return {ops::slice_channels(hc, 0, hidden), ops::slice_channels(hc, hidden, hidden)};
}

std::vector<Var> conv_lstm_sequence(const Context& ctx, ParamSet& params, const std::string& name,
                                    std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("conv_lstm_sequence: empty input");
  const Shape& s = xs[0].shape();
  ConvLstmState state = conv_lstm_zero_state(ctx.graph, s[0], s[1], s[2], conv_lstm_hidden(params, name));
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    state = conv_lstm_step(ctx, params, name, x, state);
    out.push_back(state.hidden);
  }
  return out;
}

void init_batch_norm(ParamSet& params, const std::string& name, Index channels) {
  params[name + ".gamma"] = trainable(Tensor::constant({channels}, 1.0));
  params[name + ".beta"] = trainable(Tensor::zeros({channels}));
  params[name + ".running_mean"] = buffer(Tensor::zeros({channels}));
  params[name + ".running_var"] = buffer(Tensor::constant({channels}, 1.0));
}

Var batch_norm(const Context& ctx, ParamSet& params, const std::string& name, Var x, double momentum, double eps) {
  return ops::batch_norm(ctx, x, lookup(params, name + ".gamma"), lookup(params, name + ".beta"),
                         lookup(params, name + ".running_mean"), lookup(params, name + ".running_var"), momentum,
                         eps);
}

void init_conv3d(ParamSet& params, const std::string& name, Index in_channels, Index out_channels, Rng& rng,
                 const InitOptions& opt) {
  const Index fan_in = 27 * in_channels;
  const double std = opt.weight_scale / std::sqrt(static_cast<double>(fan_in));
  params[name + ".kernel"] = trainable(Tensor::normal({fan_in, out_channels}, std, rng));
  params[name + ".bias"] = trainable(Tensor::zeros({out_channels}));
}

Var conv3d(const Context& ctx, ParamSet& params, const std::string& name, Var x) {
  Var y = ops::conv3d(x, ctx.param(lookup(params, name + ".kernel")));
  return ops::add_bias(y, ctx.param(lookup(params, name + ".bias")));
}

void RecurrentStack::init(ParamSet& params, Index in_channels, Rng& rng, const InitOptions& opt) const {
  Index in = in_channels;
  for (std::size_t l = 0; l < filters.size(); ++l) {
    const std::string name = prefix + ".lstm" + std::to_string(l);
    init_conv_lstm(params, name, in, filters[l], rng, opt);
    init_batch_norm(params, name + ".bn", filters[l]);
    in = filters[l];
  }
}

Var RecurrentStack::forward(const Context& ctx, ParamSet& params, std::span<const Var> xs) const {
  if (filters.empty()) throw std::logic_error("recurrent stack needs at least one layer");
  std::vector<Var> seq(xs.begin(), xs.end());
  Var volume;
  for (std::size_t l = 0; l < filters.size(); ++l) {
    const std::string name = prefix + ".lstm" + std::to_string(l);
    std::vector<Var> hs = conv_lstm_sequence(ctx, params, name, seq);
    volume = batch_norm(ctx, params, name + ".bn", ops::stack(hs), bn_momentum, bn_eps);
    if (l + 1 < filters.size()) {
      seq.clear();
      for (Index t = 0; t < static_cast<Index>(hs.size()); ++t) seq.push_back(ops::unstack(volume, t));
    }
  }
  return volume;
}

}  // namespace dgan::layers
