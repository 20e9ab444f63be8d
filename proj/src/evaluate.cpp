#include "dgan/evaluate.hpp"

#include <algorithm>

namespace dgan {

void ErrorAccumulator::add(const GridMatrix<double>& truth, const GridMatrix<double>& pred) {
  check_same_shape(truth, pred, "metric");
  const auto d = (truth - pred).array();
  const double sq = d.square().sum();
  const double ab = d.abs().sum();
  const double sg = d.sum();
  const auto n = static_cast<double>(truth.size());
  sq_ += sq;
  abs_ += ab;
  signed_ += sg;
  map_rmse_ += std::sqrt(sq / n);
  map_mae_ += ab / n;
  map_signed_ += sg / n;
  entries_ += static_cast<std::size_t>(truth.size());
  ++maps_;
}

MetricRow ErrorAccumulator::row(std::string model, Index horizon, Pooling pooling, bool signed_mae) const {
  if (maps_ == 0) throw std::logic_error("metrics: no maps accumulated");
  MetricRow r;
  r.model = std::move(model);
  r.horizon = horizon;
  r.samples = maps_;
  if (pooling == Pooling::pooled) {
    const auto n = static_cast<double>(entries_);
    r.rmse = std::sqrt(sq_ / n);
    r.mae = (signed_mae ? signed_ : abs_) / n;
  } else {
    const auto m = static_cast<double>(maps_);
    r.rmse = map_rmse_ / m;
    r.mae = (signed_mae ? map_signed_ : map_mae_) / m;
  }
  return r;
}

Index max_feasible_steps(const WindowedDataset& test) {
  if (test.empty()) return 0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < test.size(); ++i) last = std::max(last, test.target_index(i));
  return static_cast<Index>(test.sequence().size() - last);
}

WindowedDataset rollout_windows(const WindowedDataset& test, Index steps) {
  if (steps < 1) throw std::invalid_argument("evaluate: steps must be >= 1");
  const std::size_t n = test.sequence().size();
  std::size_t keep = 0;
  while (keep < test.size() && test.target_index(keep) + static_cast<std::size_t>(steps) <= n) ++keep;
  if (keep == 0)
    throw std::invalid_argument("evaluate: no test window has " + std::to_string(steps) + " future maps");
  return test.subset(0, keep);
}

std::vector<MetricRow> rollout_eval(DGanModel& model, const EvalData& data, Index steps, Rng& rng,
                                    const EvalConfig& cfg) {
  if (data.test.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (steps < 1) throw std::invalid_argument("evaluate: steps must be >= 1");
  const Index feasible = max_feasible_steps(data.test);
  if (steps > feasible)
    throw std::invalid_argument("evaluate: not enough future ground truth for " + std::to_string(steps) +
                                " steps; max feasible is " + std::to_string(feasible));
  if (!data.raw || data.raw->size() != data.test.sequence().size())
    throw std::invalid_argument("evaluate: raw sequence does not match the test windows");
  const auto preds = model.predict_windows(data.test, steps, rng);
  std::vector<MetricRow> rows;
  for (Index k = 0; k < steps; ++k) {
    ErrorAccumulator acc;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const auto& truth = (*data.raw)[data.test.target_index(i) + static_cast<std::size_t>(k)].values;
      acc.add(truth, data.scaler.denormalize(preds[static_cast<std::size_t>(k)][i]));
    }
    rows.push_back(acc.row("dgan", k + 1, cfg.pooling, cfg.signed_mae));
  }
  return rows;
}

MetricRow evaluate_model(DGanModel& model, const EvalData& data, Rng& rng, const EvalConfig& cfg) {
  return rollout_eval(model, data, 1, rng, cfg).front();
}

}  // namespace dgan
