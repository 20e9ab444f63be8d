// Alternating adversarial/variational optimization.
#pragma once

#include "dgan/checkpoint.hpp"
#include "dgan/model.hpp"
#include "dgan/objectives.hpp"
#include "dgan/stmap.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dgan {

struct TrainConfig {
  Index batch_size = 32;
  double learning_rate = 1e-4;
  Index epochs = 500;
  std::string optimizer = "sgd";  // "sgd" or "adam"
  double momentum = 0.0;          // sgd only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  Index d_steps_per_g_step = 1;
  std::optional<double> grad_clip_norm;
  Index checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  double kl_weight = 1.0;
  double recon_weight = 1.0;
  double d_enc_label = 1.0;
  /// Stop after this many optimizer steps in total (0 = no limit).
  Index max_steps = 0;
  /// Recompute batch-norm running statistics over the training windows with
  /// the final weights before a checkpoint is written.
  bool recalibrate_bn = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Chronological split by target slot: the first floor(fraction * n) windows
/// train, the rest test. Throws if either side would be empty.
std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& data, double fraction);

/// Windows of a raw sequence split chronologically, with the scaler fitted
/// on the maps the training windows cover.
struct PreparedData {
  std::shared_ptr<const STSequence> raw;
  std::shared_ptr<const STSequence> normalized;
  MinMaxScaler scaler;
  WindowedDataset train;  // over `normalized`
  WindowedDataset test;   // over `normalized`
};

PreparedData prepare(std::shared_ptr<const STSequence> raw, std::shared_ptr<const FactorSeries> factors, Index T,
                     double train_fraction);

/// theta <- theta - lr * g, after optional global-norm clipping of g.
/// Throws "divergence detected" on non-finite gradients.
template <typename Derived, typename GradDerived>
void sgd_step(Eigen::MatrixBase<Derived>& theta, const Eigen::MatrixBase<GradDerived>& grad, double lr,
              std::optional<double> clip_norm = std::nullopt, std::int64_t step = 0) {
  if (!grad.allFinite()) throw std::runtime_error("divergence detected at step " + std::to_string(step));
  double s = 1.0;
  if (clip_norm) {
    const double n = grad.norm();
    if (n > *clip_norm) s = *clip_norm / n;
  }
  theta -= (lr * s) * grad;
}

/// Per-parameter optimizer state for one player (D or E+G).
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg);
  /// Applies one update from the accumulated .grad of every trainable
  /// parameter in `params`. Clipping uses the global norm over the group.
  void step(std::vector<Parameter*> params, std::int64_t step_index);

 private:
  TrainConfig cfg_;
  std::map<const Parameter*, Vector> m_;
  std::map<const Parameter*, Vector> v_;
  std::int64_t t_ = 0;
};

struct TrainState {
  Checkpoint checkpoint;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::vector<LossReport> history;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + training log
  std::string config_hash;
  /// Called after each logged batch.
  std::function<void(std::int64_t step, const LossReport&)> on_step;
};

struct TrainResult {
  TrainState state;
  std::optional<std::filesystem::path> checkpoint_path;
};

/// One alternating update on a batch: D on loss_D (d_steps times), then the
/// encoders and decoder on loss_EG through the updated, frozen D.
LossReport train_step(DGanModel& model, const BatchInput& batch, const TrainConfig& cfg, Optimizer& opt_d,
                      Optimizer& opt_eg, Rng& rng, std::int64_t step_index);

/// Full training run. `train` must already be normalized; the scaler is
/// stored in the checkpoint. If a step diverges, the parameters from before
/// that step go to checkpoint_last_good.bin and the error propagates.
TrainResult train(const ArchSpec& arch, const TrainConfig& cfg, const WindowedDataset& train_set,
                  const MinMaxScaler& scaler, const TrainOptions& options = {});

/// Generator/encoder parameter groups.
std::vector<Parameter*> eg_params(DGanModel& model);
std::vector<Parameter*> d_params(DGanModel& model);

/// Writes step,d_loss,g_loss,kl,recon,total_eg rows.
void write_training_log(const std::vector<LossReport>& history, const std::filesystem::path& path);

}  // namespace dgan
