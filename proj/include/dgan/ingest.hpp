// Trip CSV parsing, grid aggregation and external-factor construction.
#pragma once

#include "dgan/stmap.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace dgan {

struct TripRecord {
  std::int64_t pickup_time = 0;  // seconds since 1970-01-01 00:00:00 (UTC, no zone handling)
  double pickup_lat = 0.0;
  double pickup_lon = 0.0;
};

/// Which header columns hold the fields. time_format is a strftime-style
/// pattern, or "unix" for integer seconds.
struct ColumnMapping {
  std::string time_column = "pickup_datetime";
  std::string lat_column = "pickup_latitude";
  std::string lon_column = "pickup_longitude";
  std::string time_format = "%Y-%m-%d %H:%M:%S";
  bool operator==(const ColumnMapping&) const = default;
};

/// Hour slot of a timestamp: floor(seconds / 3600).
std::int64_t hour_slot(std::int64_t seconds);
/// Parses a timestamp per `format`; nullopt when it does not match.
std::optional<std::int64_t> parse_timestamp(const std::string& text, const std::string& format);
/// Splits one CSV line, honoring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

/// Streaming reader over a trip CSV file.
class TripReader {
 public:
  TripReader(const std::filesystem::path& path, ColumnMapping mapping);

  /// Next well-formed record; malformed rows are counted and skipped.
  std::optional<TripRecord> next();

  std::size_t rows_read() const { return rows_; }
  std::size_t malformed() const { return malformed_; }

 private:
  std::ifstream in_;
  ColumnMapping mapping_;
  std::size_t time_idx_ = 0, lat_idx_ = 0, lon_idx_ = 0;
  std::size_t rows_ = 0;
  std::size_t malformed_ = 0;
};

struct ParsedTrips {
  std::vector<TripRecord> records;
  std::size_t rows = 0;
  std::size_t malformed = 0;
};

/// Reads every record. Throws when the file is missing, lacks a mapped
/// column, or more than half of its data rows are malformed ("format mismatch").
ParsedTrips parse_trips(const std::filesystem::path& path, const ColumnMapping& mapping = {});

struct AggregateResult {
  STSequence sequence;
  std::size_t kept = 0;
  std::size_t dropped_outside_grid = 0;
  std::size_t dropped_outside_window = 0;
};

/// Counts records per (hour slot, cell) for slots start_slot..end_slot
/// inclusive. The resulting sequence's epoch is start_slot.
AggregateResult aggregate(std::span<const TripRecord> records, const GridSpec& grid, std::int64_t start_slot,
                          std::int64_t end_slot);

struct Calendar {
  /// Day-of-week of hour slot 0 (1970-01-01 is a Thursday), 0 = Monday.
  int weekday_of_slot0 = 3;
  bool is_weekend(std::int64_t slot) const;
};

/// One frame per slot in [first_slot, first_slot + num_slots). Weather CSV:
/// header with a time column (named by weather_time_column) followed by
/// numeric columns; each column is min-max scaled over the file, and hours
/// without a row carry the previous hour forward (slots before the first row
/// take the first row). PoI CSV: header row,col,value; one value per region,
/// scaled by the maximum. Throws if no weather row exists.
FactorSeries build_factors(const std::filesystem::path& weather_path, const std::filesystem::path& poi_path,
                           const Calendar& calendar, const GridSpec& grid, std::int64_t first_slot,
                           Index num_slots, const std::string& weather_time_column = "timestamp",
                           const std::string& time_format = "%Y-%m-%d %H:%M:%S");

}  // namespace dgan
