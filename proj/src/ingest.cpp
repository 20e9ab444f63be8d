#include "dgan/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dgan {

std::int64_t hour_slot(std::int64_t seconds) {
  std::int64_t q = seconds / 3600;
  if (seconds % 3600 != 0 && seconds < 0) --q;
  return q;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::filesystem::path& path) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) == name) return i;
  throw std::runtime_error(path.string() + ": missing column '" + name + "'");
}

// Days from 1970-01-01 to y-m-d in the proleptic Gregorian calendar.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(const std::string& text, const std::string& format) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  if (format == "unix") {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
  }
  std::tm tm{};
  std::istringstream is(t);
  is >> std::get_time(&tm, format.c_str());
  if (is.fail()) return std::nullopt;
  is >> std::ws;
  if (!is.eof()) return std::nullopt;
  const std::int64_t days = days_from_civil(tm.tm_year + 1900, static_cast<unsigned>(tm.tm_mon + 1),
                                            static_cast<unsigned>(tm.tm_mday));
  return days * 86400 + tm.tm_hour * 3600 + tm.tm_min * 60 + tm.tm_sec;
}

TripReader::TripReader(const std::filesystem::path& path, ColumnMapping mapping)
    : in_(path), mapping_(std::move(mapping)) {
  if (!in_) throw std::runtime_error("cannot open trip file " + path.string());
  std::string line;
  if (!std::getline(in_, line)) throw std::runtime_error(path.string() + ": empty file, expected a header row");
  const auto header = split_csv_line(line);
  time_idx_ = column_index(header, mapping_.time_column, path);
  lat_idx_ = column_index(header, mapping_.lat_column, path);
  lon_idx_ = column_index(header, mapping_.lon_column, path);
}

std::optional<TripRecord> TripReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    if (trim(line).empty() || trim(line) == "\r") continue;
    ++rows_;
    const auto fields = split_csv_line(line);
    const std::size_t need = std::max({time_idx_, lat_idx_, lon_idx_});
    if (fields.size() <= need) {
      ++malformed_;
      continue;
    }
    auto ts = parse_timestamp(fields[time_idx_], mapping_.time_format);
    auto lat = parse_double(fields[lat_idx_]);
    auto lon = parse_double(fields[lon_idx_]);
    if (!ts || !lat || !lon) {
      ++malformed_;
      continue;
    }
    return TripRecord{*ts, *lat, *lon};
  }
  return std::nullopt;
}

ParsedTrips parse_trips(const std::filesystem::path& path, const ColumnMapping& mapping) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("trip file not found: " + path.string());
  TripReader reader(path, mapping);
  ParsedTrips out;
  while (auto rec = reader.next()) out.records.push_back(*rec);
  out.rows = reader.rows_read();
  out.malformed = reader.malformed();
  if (out.rows > 0 && 2 * out.malformed > out.rows)
    throw std::runtime_error("format mismatch: " + std::to_string(out.malformed) + " of " +
                             std::to_string(out.rows) + " rows malformed in " + path.string());
  return out;
}

AggregateResult aggregate(std::span<const TripRecord> records, const GridSpec& grid, std::int64_t start_slot,
                          std::int64_t end_slot) {
  grid.validate();
  if (start_slot > end_slot) throw std::invalid_argument("aggregate: start_slot must be <= end_slot");
  const auto n = static_cast<std::size_t>(end_slot - start_slot + 1);
  std::vector<GridMatrix<double>> counts(n, GridMatrix<double>::Zero(grid.rows, grid.cols));
  AggregateResult res;
  for (const auto& r : records) {
    const std::int64_t slot = hour_slot(r.pickup_time);
    if (slot < start_slot || slot > end_slot) {
      ++res.dropped_outside_window;
      continue;
    }
    auto cell = locate(grid, r.pickup_lat, r.pickup_lon);
    if (!cell) {
      ++res.dropped_outside_grid;
      continue;
    }
    counts[static_cast<std::size_t>(slot - start_slot)](cell->row, cell->col) += 1.0;
    ++res.kept;
  }
  res.sequence = STSequence(grid.rows, grid.cols, start_slot);
  for (auto& m : counts) res.sequence.push_back(std::move(m));
  return res;
}

bool Calendar::is_weekend(std::int64_t slot) const {
  std::int64_t day = slot / 24;
  if (slot % 24 != 0 && slot < 0) --day;
  const auto dow = static_cast<int>(((day + weekday_of_slot0) % 7 + 7) % 7);
  return dow >= 5;
}

FactorSeries build_factors(const std::filesystem::path& weather_path, const std::filesystem::path& poi_path,
                           const Calendar& calendar, const GridSpec& grid, std::int64_t first_slot,
                           Index num_slots, const std::string& weather_time_column, const std::string& time_format) {
  grid.validate();
  if (num_slots < 1) throw std::invalid_argument("build_factors: num_slots must be >= 1");

  std::ifstream win(weather_path);
  if (!win) throw std::runtime_error("cannot open weather file " + weather_path.string());
  std::string line;
  if (!std::getline(win, line)) throw std::runtime_error("no weather coverage: empty file " + weather_path.string());
  const auto header = split_csv_line(line);
  const std::size_t tcol = column_index(header, weather_time_column, weather_path);
  std::vector<std::size_t> value_cols;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != tcol) value_cols.push_back(i);
  if (value_cols.empty()) throw std::runtime_error(weather_path.string() + ": no weather value columns");
  const auto arity = static_cast<Index>(value_cols.size());

  std::map<std::int64_t, Eigen::VectorXd> by_slot;
  while (std::getline(win, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < header.size()) continue;
    auto ts = parse_timestamp(f[tcol], time_format);
    if (!ts) continue;
    Eigen::VectorXd v(arity);
    bool ok = true;
    for (Index k = 0; k < arity && ok; ++k) {
      auto d = parse_double(f[value_cols[static_cast<std::size_t>(k)]]);
      ok = d.has_value();
      if (ok) v[k] = *d;
    }
    if (ok) by_slot[hour_slot(*ts)] = v;
  }
  if (by_slot.empty()) throw std::runtime_error("no weather coverage in " + weather_path.string());

  Eigen::VectorXd lo = by_slot.begin()->second, hi = lo;
  for (const auto& [s, v] : by_slot) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Eigen::VectorXd range = hi - lo;

  GridMatrix<double> poi = GridMatrix<double>::Zero(grid.rows, grid.cols);
  std::ifstream pin(poi_path);
  if (!pin) throw std::runtime_error("cannot open PoI file " + poi_path.string());
  if (!std::getline(pin, line)) throw std::runtime_error(poi_path.string() + ": empty file");
  const auto pheader = split_csv_line(line);
  const std::size_t rc = column_index(pheader, "row", poi_path);
  const std::size_t cc = column_index(pheader, "col", poi_path);
  const std::size_t vc = column_index(pheader, "value", poi_path);
  while (std::getline(pin, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() <= std::max({rc, cc, vc})) throw std::runtime_error(poi_path.string() + ": short row");
    auto r = parse_double(f[rc]);
    auto c = parse_double(f[cc]);
    auto v = parse_double(f[vc]);
    if (!r || !c || !v || *r < 0 || *c < 0 || *r >= static_cast<double>(grid.rows) ||
        *c >= static_cast<double>(grid.cols) || *v < 0)
      throw std::runtime_error(poi_path.string() + ": invalid row '" + line + "'");
    poi(static_cast<Index>(*r), static_cast<Index>(*c)) = *v;
  }
  if (poi.maxCoeff() > 0) poi /= poi.maxCoeff();

  FactorSeries out;
  out.reserve(static_cast<std::size_t>(num_slots));
  Eigen::VectorXd current = by_slot.begin()->second;
  for (Index k = 0; k < num_slots; ++k) {
    const std::int64_t slot = first_slot + k;
    auto it = by_slot.upper_bound(slot);
    if (it != by_slot.begin()) current = std::prev(it)->second;
    ExternalFactorFrame f;
    f.poi = poi;
    f.weather = Eigen::VectorXd(arity);
    for (Index j = 0; j < arity; ++j) f.weather[j] = range[j] > 0 ? (current[j] - lo[j]) / range[j] : 0.0;
    f.is_weekend = calendar.is_weekend(slot) ? 1.0 : 0.0;
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace dgan
