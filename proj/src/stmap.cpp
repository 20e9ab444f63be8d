#include "dgan/stmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dgan {

void GridSpec::validate() const {
  if (!(lat_start < lat_end)) throw std::invalid_argument("grid: lat_start must be < lat_end");
  if (!(lon_start < lon_end)) throw std::invalid_argument("grid: lon_start must be < lon_end");
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid: rows and cols must be >= 1");
}

namespace {

// Index of the half-open bin containing v, the final bin closed on the right.
std::optional<Index> bin(double v, double lo, double hi, Index count) {
  if (!std::isfinite(v) || v < lo || v > hi) return std::nullopt;
  const double width = (hi - lo) / static_cast<double>(count);
  auto k = static_cast<Index>(std::floor((v - lo) / width));
  // Guard against rounding: enforce lo + k*width <= v < lo + (k+1)*width.
  while (k > 0 && v < lo + static_cast<double>(k) * width) --k;
  while (k < count - 1 && v >= lo + static_cast<double>(k + 1) * width) ++k;
  return std::clamp<Index>(k, 0, count - 1);
}

}  // namespace

std::optional<Cell> locate(const GridSpec& grid, double lat, double lon) {
  auto r = bin(lat, grid.lat_start, grid.lat_end, grid.rows);
  auto c = bin(lon, grid.lon_start, grid.lon_end, grid.cols);
  if (!r || !c) return std::nullopt;
  return Cell{*r, *c};
}

STSequence::STSequence(Index rows, Index cols, std::int64_t epoch_slot)
    : rows_(rows), cols_(cols), epoch_slot_(epoch_slot) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("sequence: grid must be at least 1x1");
}

void STSequence::push_back(GridMatrix<double> values) {
  if (values.rows() != rows_ || values.cols() != cols_)
    throw std::invalid_argument("sequence: map shape does not match grid");
  if (!values.allFinite()) throw std::invalid_argument("sequence: map contains non-finite values");
  const auto slot = epoch_slot_ + static_cast<std::int64_t>(maps_.size());
  maps_.push_back({std::move(values), slot});
}

double STSequence::total() const {
  double s = 0.0;
  for (const auto& m : maps_) s += m.values.sum();
  return s;
}

STSequence MinMaxScaler::normalize(const STSequence& seq) const {
  STSequence out(seq.rows(), seq.cols(), seq.epoch_slot());
  for (const auto& m : seq.maps()) out.push_back(normalize(m.values));
  return out;
}

MinMaxScaler fit_minmax(std::span<const STMap> train_maps) {
  if (train_maps.empty()) throw std::invalid_argument("no training data");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& m : train_maps) {
    lo = std::min(lo, m.values.minCoeff());
    hi = std::max(hi, m.values.maxCoeff());
  }
  return {lo, hi};
}

WindowedDataset::WindowedDataset(std::shared_ptr<const STSequence> seq,
                                 std::shared_ptr<const FactorSeries> factors, Index window,
                                 std::vector<std::size_t> starts)
    : seq_(std::move(seq)), factors_(std::move(factors)), window_(window), starts_(std::move(starts)) {}

WindowedDataset WindowedDataset::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > starts_.size()) throw std::out_of_range("dataset subset out of range");
  return {seq_, factors_, window_, {starts_.begin() + static_cast<std::ptrdiff_t>(begin),
                                    starts_.begin() + static_cast<std::ptrdiff_t>(end)}};
}

WindowedDataset WindowedDataset::rebind(std::shared_ptr<const STSequence> seq) const {
  if (!seq || seq->size() != seq_->size()) throw std::invalid_argument("rebind: sequence length differs");
  return {std::move(seq), factors_, window_, starts_};
}

WindowedDataset window(std::shared_ptr<const STSequence> seq, std::shared_ptr<const FactorSeries> factors,
                       Index T) {
  if (!seq) throw std::invalid_argument("window: null sequence");
  if (T < 1) throw std::invalid_argument("window: length must be >= 1");
  const auto n = seq->size();
  if (n < static_cast<std::size_t>(T) + 1)
    throw std::invalid_argument("window: sequence of " + std::to_string(n) + " maps is too short for T=" +
                                std::to_string(T));
  if (factors && !factors->empty() && factors->size() != n)
    throw std::invalid_argument("window: factor series length differs from sequence length");
  std::vector<std::size_t> starts(n - static_cast<std::size_t>(T));
  for (std::size_t i = 0; i < starts.size(); ++i) starts[i] = i;
  return {std::move(seq), std::move(factors), T, std::move(starts)};
}

}  // namespace dgan
