#include "dgan/objectives.hpp"

namespace dgan {

ComposedLoss compose(const LossReport& parts, const LossWeights& weights) {
  if (!(weights.kl > 0.0) || !(weights.recon > 0.0)) throw std::invalid_argument("loss weights must be positive");
  return {parts.d_loss, weights.kl * parts.kl + weights.recon * parts.recon + parts.g_loss};
}

namespace graph_loss {

namespace {

Var squared_distance(Var p, double label) { return ops::mean(ops::square(ops::add_scalar(p, -label))); }

}  // namespace

Var d_loss(Var d_real, Var d_fake, Var d_enc, double label_enc) {
  Var a = squared_distance(d_real, 1.0);
  Var b = squared_distance(d_fake, 0.0);
  Var c = squared_distance(d_enc, label_enc);
  return ops::add(ops::add(a, b), c);
}

Var g_loss(Var d_fake, Var d_enc) { return ops::add(squared_distance(d_fake, 1.0), squared_distance(d_enc, 1.0)); }

Var kl_divergence(Var mu, Var logvar) {
  // (mu^2 + exp(logvar) - 1 - logvar) / 2 summed per sample, averaged over batch.
  Var t = ops::sub(ops::add(ops::square(mu), ops::exp(logvar)), logvar);
  t = ops::add_scalar(t, -1.0);
  const double batch = static_cast<double>(mu.value().leading());
  return ops::scale(ops::sum(t), 0.5 / batch);
}

Var recon_loss(Var target, Var pred) {
  const double regions = static_cast<double>(target.value().channels());
  return ops::scale(ops::mean(ops::row_norm(ops::sub(target, pred))), 1.0 / regions);
}

Var compose_eg(Var kl, Var recon, Var g, const LossWeights& weights) {
  return ops::add(ops::add(ops::scale(kl, weights.kl), ops::scale(recon, weights.recon)), g);
}

}  // namespace graph_loss

}  // namespace dgan
