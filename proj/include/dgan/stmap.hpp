// Grid data model: regions, ST maps, sequences, scaling and windowing.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dgan {

template <typename Scalar>
using GridMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

struct Cell {
  Index row = 0;
  Index col = 0;
  bool operator==(const Cell&) const = default;
};

/// Bounding box partitioned into rows x cols equal cells. Row 0 starts at
/// lat_start, column 0 at lon_start.
struct GridSpec {
  double lat_start = 0.0;
  double lon_start = 0.0;
  double lat_end = 1.0;
  double lon_end = 1.0;
  Index rows = 1;
  Index cols = 1;

  void validate() const;
  Index regions() const { return rows * cols; }
  bool operator==(const GridSpec&) const = default;
};

/// Cell containing (lat, lon). Cells are half-open [low, high) except the
/// last row/column, which also owns the outer edge.
std::optional<Cell> locate(const GridSpec& grid, double lat, double lon);

/// One time slot of demand over the grid.
struct STMap {
  GridMatrix<double> values;
  std::int64_t slot = 0;
};

/// Consecutive hourly maps sharing one grid shape.
class STSequence {
 public:
  STSequence() = default;
  STSequence(Index rows, Index cols, std::int64_t epoch_slot);

  void push_back(GridMatrix<double> values);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::int64_t epoch_slot() const { return epoch_slot_; }
  std::size_t size() const { return maps_.size(); }
  bool empty() const { return maps_.empty(); }

  const STMap& operator[](std::size_t i) const { return maps_[i]; }
  STMap& operator[](std::size_t i) { return maps_[i]; }
  const std::vector<STMap>& maps() const { return maps_; }

  double total() const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::int64_t epoch_slot_ = 0;
  std::vector<STMap> maps_;
};

struct MinMaxScaler {
  double data_min = 0.0;
  double data_max = 0.0;

  template <typename Derived>
  GridMatrix<typename Derived::Scalar> normalize(const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    const Scalar range = Scalar(data_max - data_min);
    if (range <= Scalar(0)) return GridMatrix<Scalar>::Zero(x.rows(), x.cols());
    return ((x.array() - Scalar(data_min)) / range).cwiseMax(Scalar(0)).cwiseMin(Scalar(1)).matrix();
  }

  template <typename Derived>
  GridMatrix<typename Derived::Scalar> denormalize(const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    const Scalar range = Scalar(data_max - data_min);
    if (range <= Scalar(0)) return GridMatrix<Scalar>::Constant(x.rows(), x.cols(), Scalar(data_min));
    return (x.array() * range + Scalar(data_min)).matrix();
  }

  STMap normalize(const STMap& map) const { return {normalize(map.values), map.slot}; }
  STMap denormalize(const STMap& map) const { return {denormalize(map.values), map.slot}; }
  STSequence normalize(const STSequence& seq) const;
};

/// Global extrema over every entry of every map. Throws on empty input.
MinMaxScaler fit_minmax(std::span<const STMap> train_maps);

/// Per-slot external signals.
struct ExternalFactorFrame {
  GridMatrix<double> poi;
  Eigen::VectorXd weather;
  double is_weekend = 0.0;
};

using FactorSeries = std::vector<ExternalFactorFrame>;

/// Stride-1 sliding windows over a sequence. Each sample is identified by the
/// index of its first history map; the target is the map right after the
/// history.
class WindowedDataset {
 public:
  WindowedDataset() = default;
  WindowedDataset(std::shared_ptr<const STSequence> seq, std::shared_ptr<const FactorSeries> factors,
                  Index window, std::vector<std::size_t> starts);

  Index window() const { return window_; }
  std::size_t size() const { return starts_.size(); }
  bool empty() const { return starts_.empty(); }
  std::size_t start(std::size_t i) const { return starts_[i]; }
  std::size_t target_index(std::size_t i) const { return starts_[i] + static_cast<std::size_t>(window_); }
  const std::vector<std::size_t>& starts() const { return starts_; }

  const STSequence& sequence() const { return *seq_; }
  const FactorSeries& factors() const { return *factors_; }
  bool has_factors() const { return factors_ && !factors_->empty(); }
  std::shared_ptr<const STSequence> sequence_ptr() const { return seq_; }
  std::shared_ptr<const FactorSeries> factors_ptr() const { return factors_; }

  const STMap& history(std::size_t i, Index t) const { return (*seq_)[starts_[i] + static_cast<std::size_t>(t)]; }
  const STMap& target(std::size_t i) const { return (*seq_)[target_index(i)]; }
  const ExternalFactorFrame& factor(std::size_t i, Index t) const {
    return (*factors_)[starts_[i] + static_cast<std::size_t>(t)];
  }

  /// Samples [begin, end) in their original order.
  WindowedDataset subset(std::size_t begin, std::size_t end) const;
  /// Same windows over a different (e.g. normalized) sequence of equal length.
  WindowedDataset rebind(std::shared_ptr<const STSequence> seq) const;

 private:
  std::shared_ptr<const STSequence> seq_;
  std::shared_ptr<const FactorSeries> factors_;
  Index window_ = 0;
  std::vector<std::size_t> starts_;
};

/// Throws if the sequence holds fewer than window + 1 maps.
WindowedDataset window(std::shared_ptr<const STSequence> seq, std::shared_ptr<const FactorSeries> factors,
                       Index T);

}  // namespace dgan
