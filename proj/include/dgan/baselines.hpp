// Classical next-map predictors used as comparison points.
#pragma once

#include "dgan/evaluate.hpp"
#include "dgan/stmap.hpp"
#include "dgan/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace dgan {

enum class BaselineKind { sma, wma, ols, mlp };

BaselineKind baseline_from_string(const std::string& name);
std::string to_string(BaselineKind kind);

/// Per-region mean of the last k maps.
GridMatrix<double> sma(std::span<const GridMatrix<double>> history, Index k);
/// Per-region weighted mean of the last k maps, weights 1..k (oldest..newest)
/// normalized to sum 1.
GridMatrix<double> wma(std::span<const GridMatrix<double>> history, Index k);

/// Per-region least squares on the last k values plus an intercept. Uses a
/// rank-revealing solve, so collinear histories yield the minimum-norm fit.
class OlsBaseline {
 public:
  explicit OlsBaseline(Index k) : k_(k) {}
  void fit(const WindowedDataset& train);
  GridMatrix<double> predict(std::span<const GridMatrix<double>> history) const;
  /// Root mean squared residual over the training windows.
  double training_rmse() const { return train_rmse_; }
  Index k() const { return k_; }

 private:
  Index k_;
  Index rows_ = 0, cols_ = 0;
  Eigen::MatrixXd coef_;  // (k + 1) x regions; last row is the intercept
  double train_rmse_ = 0.0;
};

/// Dense network on the flattened last k maps with LeakyReLU hidden layers
/// and a linear output, trained with squared error.
class MlpBaseline {
 public:
  MlpBaseline(Index k, MlpBaselineConfig cfg) : k_(k), cfg_(std::move(cfg)) {}
  void fit(const WindowedDataset& train);
  GridMatrix<double> predict(std::span<const GridMatrix<double>> history);
  Index k() const { return k_; }

 private:
  Var forward(const Context& ctx, Var x);

  Index k_;
  MlpBaselineConfig cfg_;
  Index rows_ = 0, cols_ = 0;
  ParamSet params_;
};

/// One-step evaluation of a baseline on the test windows of `data`, fit on
/// `train` where needed. Histories are the last k normalized maps of each
/// window; predictions are denormalized before scoring.
MetricRow evaluate_baseline(BaselineKind kind, const WindowedDataset& train, const EvalData& data,
                            const EvalConfig& cfg);

}  // namespace dgan
