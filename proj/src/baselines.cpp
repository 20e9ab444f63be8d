#include "dgan/baselines.hpp"

#include "dgan/layers.hpp"
#include "dgan/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dgan {

BaselineKind baseline_from_string(const std::string& name) {
  if (name == "sma") return BaselineKind::sma;
  if (name == "wma") return BaselineKind::wma;
  if (name == "ols") return BaselineKind::ols;
  if (name == "mlp") return BaselineKind::mlp;
  throw std::invalid_argument("unknown baseline '" + name + "'");
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::sma: return "sma";
    case BaselineKind::wma: return "wma";
    case BaselineKind::ols: return "ols";
    case BaselineKind::mlp: return "mlp";
  }
  return "?";
}

namespace {

void require_history(std::span<const GridMatrix<double>> history, Index k, const char* who) {
  if (k < 1) throw std::invalid_argument(std::string(who) + ": k must be >= 1");
  if (static_cast<Index>(history.size()) < k)
    throw std::invalid_argument(std::string(who) + ": need " + std::to_string(k) + " history maps, got " +
                                std::to_string(history.size()));
}

std::vector<GridMatrix<double>> last_k(const WindowedDataset& data, std::size_t i, Index k) {
  std::vector<GridMatrix<double>> h;
  for (Index t = data.window() - k; t < data.window(); ++t) h.push_back(data.history(i, t).values);
  return h;
}

}  // namespace

GridMatrix<double> sma(std::span<const GridMatrix<double>> history, Index k) {
  require_history(history, k, "sma");
  GridMatrix<double> acc = GridMatrix<double>::Zero(history.back().rows(), history.back().cols());
  for (auto it = history.end() - k; it != history.end(); ++it) acc += *it;
  return acc / static_cast<double>(k);
}

GridMatrix<double> wma(std::span<const GridMatrix<double>> history, Index k) {
  require_history(history, k, "wma");
  GridMatrix<double> acc = GridMatrix<double>::Zero(history.back().rows(), history.back().cols());
  double w = 1.0;
  for (auto it = history.end() - k; it != history.end(); ++it, w += 1.0) acc += w * *it;
  return acc / (static_cast<double>(k) * static_cast<double>(k + 1) / 2.0);
}

void OlsBaseline::fit(const WindowedDataset& train) {
  if (train.empty()) throw std::invalid_argument("ols: empty training set");
  if (train.window() < k_) throw std::invalid_argument("ols: window shorter than k");
  rows_ = train.sequence().rows();
  cols_ = train.sequence().cols();
  const Index n = static_cast<Index>(train.size());
  const Index regions = rows_ * cols_;
  coef_.resize(k_ + 1, regions);
  double sq = 0.0;
  for (Index r = 0; r < regions; ++r) {
    Eigen::MatrixXd X(n, k_ + 1);
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
      const auto s = static_cast<std::size_t>(i);
      for (Index j = 0; j < k_; ++j) X(i, j) = train.history(s, train.window() - k_ + j).values.data()[r];
      X(i, k_) = 1.0;
      y[i] = train.target(s).values.data()[r];
    }
    coef_.col(r) = X.completeOrthogonalDecomposition().solve(y);
    sq += (X * coef_.col(r) - y).squaredNorm();
  }
  train_rmse_ = std::sqrt(sq / static_cast<double>(n * regions));
}

GridMatrix<double> OlsBaseline::predict(std::span<const GridMatrix<double>> history) const {
  require_history(history, k_, "ols");
  if (coef_.size() == 0) throw std::logic_error("ols: predict before fit");
  GridMatrix<double> out(rows_, cols_);
  for (Index r = 0; r < rows_ * cols_; ++r) {
    double v = coef_(k_, r);
    for (Index j = 0; j < k_; ++j) v += coef_(j, r) * history[history.size() - static_cast<std::size_t>(k_ - j)].data()[r];
    out.data()[r] = v;
  }
  return out;
}

Var MlpBaseline::forward(const Context& ctx, Var x) {
  for (std::size_t l = 0; l < cfg_.hidden.size(); ++l)
    x = ops::leaky_relu(layers::dense(ctx, params_, "mlp.h" + std::to_string(l), x), 0.2);
  return layers::dense(ctx, params_, "mlp.out", x);
}

void MlpBaseline::fit(const WindowedDataset& train) {
  if (train.empty()) throw std::invalid_argument("mlp: empty training set");
  if (train.window() < k_) throw std::invalid_argument("mlp: window shorter than k");
  rows_ = train.sequence().rows();
  cols_ = train.sequence().cols();
  const Index regions = rows_ * cols_;
  Rng rng(cfg_.seed);
  params_.clear();
  Index in = k_ * regions;
  for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
    layers::init_dense(params_, "mlp.h" + std::to_string(l), in, cfg_.hidden[l], rng);
    in = cfg_.hidden[l];
  }
  layers::init_dense(params_, "mlp.out", in, regions, rng);

  TrainConfig tc;
  tc.optimizer = "adam";
  tc.learning_rate = cfg_.learning_rate;
  Optimizer opt(tc);
  std::vector<Parameter*> ps;
  for (auto& [name, p] : params_) ps.push_back(&p);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  for (Index e = 0; e < cfg_.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg_.batch_size));
      const auto bs = static_cast<Index>(end - b);
      Tensor x({bs, k_ * regions}), y({bs, regions});
      for (Index i = 0; i < bs; ++i) {
        const auto s = order[b + static_cast<std::size_t>(i)];
        for (Index j = 0; j < k_; ++j)
          x.matrix().row(i).segment(j * regions, regions) =
              Eigen::Map<const Eigen::RowVectorXd>(train.history(s, train.window() - k_ + j).values.data(), regions);
        y.matrix().row(i) = Eigen::Map<const Eigen::RowVectorXd>(train.target(s).values.data(), regions);
      }
      Graph g;
      Context ctx{g, true};
      Var diff = ops::sub(forward(ctx, g.constant(std::move(x))), g.constant(std::move(y)));
      Var loss = ops::mean(ops::square(diff));
      for (auto* p : ps) p->zero_grad();
      g.backward(loss);
      opt.step(ps, step++);
    }
  }
}

GridMatrix<double> MlpBaseline::predict(std::span<const GridMatrix<double>> history) {
  require_history(history, k_, "mlp");
  if (params_.empty()) throw std::logic_error("mlp: predict before fit");
  const Index regions = rows_ * cols_;
  Tensor x({1, k_ * regions});
  for (Index j = 0; j < k_; ++j)
    x.data.segment(j * regions, regions) = Eigen::Map<const Vector>(
        history[history.size() - static_cast<std::size_t>(k_ - j)].data(), regions);
  Graph g;
  Context ctx{g};
  Var out = forward(ctx, g.constant(std::move(x)));
  return Eigen::Map<const GridMatrix<double>>(out.value().data.data(), rows_, cols_);
}

MetricRow evaluate_baseline(BaselineKind kind, const WindowedDataset& train, const EvalData& data,
                            const EvalConfig& cfg) {
  const Index k = cfg.baseline_k;
  if (data.test.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (data.test.window() < k) throw std::invalid_argument("baseline: window shorter than k");
  std::optional<OlsBaseline> ols;
  std::optional<MlpBaseline> mlp;
  if (kind == BaselineKind::ols) {
    ols.emplace(k);
    ols->fit(train);
  } else if (kind == BaselineKind::mlp) {
    mlp.emplace(k, cfg.mlp);
    mlp->fit(train);
  }
  ErrorAccumulator acc;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto h = last_k(data.test, i, k);
    GridMatrix<double> pred;
    switch (kind) {
      case BaselineKind::sma: pred = sma(h, k); break;
      case BaselineKind::wma: pred = wma(h, k); break;
      case BaselineKind::ols: pred = ols->predict(h); break;
      case BaselineKind::mlp: pred = mlp->predict(h); break;
    }
    acc.add((*data.raw)[data.test.target_index(i)].values, data.scaler.denormalize(pred));
  }
  std::string name = to_string(kind);
  if (kind == BaselineKind::sma || kind == BaselineKind::wma) name += "(" + std::to_string(k) + ")";
  return acc.row(name, 1, cfg.pooling, cfg.signed_mae);
}

}  // namespace dgan
