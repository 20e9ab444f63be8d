// Error metrics and test-set evaluation.
#pragma once

#include "dgan/model.hpp"
#include "dgan/stmap.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgan {

template <typename A, typename B>
void check_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

/// sqrt(mean over regions of (truth - pred)^2).
template <typename A, typename B>
typename A::Scalar rmse(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred) {
  check_same_shape(truth, pred, "rmse");
  using std::sqrt;
  return sqrt((truth - pred).squaredNorm() / typename A::Scalar(truth.size()));
}

/// mean over regions of |truth - pred|; the signed mean when signed_errors.
template <typename A, typename B>
typename A::Scalar mae(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred,
                       bool signed_errors = false) {
  check_same_shape(truth, pred, "mae");
  const auto d = (truth - pred).array();
  return (signed_errors ? d.sum() : d.abs().sum()) / typename A::Scalar(truth.size());
}

enum class Pooling { pooled, per_map };

struct MetricRow {
  std::string model;
  Index horizon = 1;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t samples = 0;
};

/// Accumulates errors over many maps. Pooled RMSE takes the root of the mean
/// over every (map, region) pair; per-map averages the per-map metrics.
class ErrorAccumulator {
 public:
  void add(const GridMatrix<double>& truth, const GridMatrix<double>& pred);
  MetricRow row(std::string model, Index horizon, Pooling pooling = Pooling::pooled,
                bool signed_mae = false) const;
  std::size_t maps() const { return maps_; }

 private:
  double sq_ = 0.0, abs_ = 0.0, signed_ = 0.0;
  double map_rmse_ = 0.0, map_mae_ = 0.0, map_signed_ = 0.0;
  std::size_t entries_ = 0;
  std::size_t maps_ = 0;
};

struct MlpBaselineConfig {
  std::vector<Index> hidden{128, 128, 64, 64};
  Index epochs = 30;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  Index steps = 1;
  std::vector<std::string> baselines{"sma", "wma", "ols", "mlp"};
  Index baseline_k = 8;
  Pooling pooling = Pooling::pooled;
  bool signed_mae = false;
  MlpBaselineConfig mlp;
};

/// Test windows over the normalized sequence plus the raw sequence the
/// metrics are measured against.
struct EvalData {
  WindowedDataset test;
  std::shared_ptr<const STSequence> raw;
  MinMaxScaler scaler;
};

/// One-step predictions on every test window, denormalized, pooled.
MetricRow evaluate_model(DGanModel& model, const EvalData& data, Rng& rng, const EvalConfig& cfg = {});

/// Autoregressive rollout over horizons 1..steps. Every test window needs
/// `steps` future ground-truth maps; otherwise throws naming the largest
/// feasible horizon.
std::vector<MetricRow> rollout_eval(DGanModel& model, const EvalData& data, Index steps, Rng& rng,
                                    const EvalConfig& cfg = {});

/// Largest horizon for which every test window has ground truth.
Index max_feasible_steps(const WindowedDataset& test);

/// The leading test windows that have `steps` future ground-truth maps.
/// Throws if there are none.
WindowedDataset rollout_windows(const WindowedDataset& test, Index steps);

}  // namespace dgan
