// Least-squares adversarial losses, KL regularizer, reconstruction loss and
// the per-player composite objectives.
//
// Each loss comes in two forms: a plain numeric function templated on the
// scalar type (used for reporting and testing) and a graph version used in
// training. Batch inputs are averaged per term.
#pragma once

#include "dgan/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace dgan {

template <typename Derived>
typename Derived::Scalar mean_squared_distance(const Eigen::ArrayBase<Derived>& p,
                                               typename Derived::Scalar label) {
  return (p - label).square().mean();
}

/// ||D(y_real) - 1||^2 + ||D(y_fake)||^2 + ||D(y_enc) - label_enc||^2.
template <typename A, typename B, typename C>
typename A::Scalar d_loss(const Eigen::ArrayBase<A>& d_real, const Eigen::ArrayBase<B>& d_fake,
                          const Eigen::ArrayBase<C>& d_enc, typename A::Scalar label_enc = 1) {
  using S = typename A::Scalar;
  return mean_squared_distance(d_real, S(1)) + mean_squared_distance(d_fake, S(0)) +
         mean_squared_distance(d_enc, label_enc);
}

/// ||D(y_fake) - 1||^2 + ||D(y_enc) - 1||^2.
template <typename A, typename B>
typename A::Scalar g_loss(const Eigen::ArrayBase<A>& d_fake, const Eigen::ArrayBase<B>& d_enc) {
  using S = typename A::Scalar;
  return mean_squared_distance(d_fake, S(1)) + mean_squared_distance(d_enc, S(1));
}

/// KL(N(mu, diag sigma^2) || N(0, I)) = sum_d (mu^2 + sigma^2 - 1 - ln sigma^2) / 2.
template <typename A, typename B>
typename A::Scalar kl_divergence(const Eigen::ArrayBase<A>& mu, const Eigen::ArrayBase<B>& sigma) {
  if ((sigma <= 0).any()) throw std::invalid_argument("kl_divergence: sigma must be positive");
  const auto s2 = sigma.square();
  return ((mu.square() + s2 - 1 - s2.log()) / 2).sum();
}

/// ||x_real - x_enc||_2 / (number of regions).
template <typename A, typename B>
typename A::Scalar recon_loss(const Eigen::MatrixBase<A>& x_real, const Eigen::MatrixBase<B>& x_enc) {
  if (x_real.rows() != x_enc.rows() || x_real.cols() != x_enc.cols())
    throw std::invalid_argument("recon_loss: shape mismatch");
  using S = typename A::Scalar;
  return (x_real - x_enc).norm() / S(x_real.size());
}

struct LossWeights {
  double kl = 1.0;
  double recon = 1.0;
};

struct LossReport {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  double total_eg = 0.0;
};

struct ComposedLoss {
  double loss_d = 0.0;
  double loss_eg = 0.0;
};

/// loss_D = d_loss; loss_EG = w.kl * kl + w.recon * recon + g_loss.
ComposedLoss compose(const LossReport& parts, const LossWeights& weights = {});

namespace graph_loss {

/// Inputs are (B, 1) probabilities.
Var d_loss(Var d_real, Var d_fake, Var d_enc, double label_enc);
Var g_loss(Var d_fake, Var d_enc);
/// Batch mean of the per-sample KL from (mu, log sigma^2), both (B, L).
Var kl_divergence(Var mu, Var logvar);
/// Batch mean of per-sample ||target - pred|| / regions; both (B, regions).
Var recon_loss(Var target, Var pred);
Var compose_eg(Var kl, Var recon, Var g, const LossWeights& weights);

}  // namespace graph_loss

}  // namespace dgan
