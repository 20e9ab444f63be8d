// On-disk containers for sequences and factor series, plus metric and
// prediction tables.
#pragma once

#include "dgan/evaluate.hpp"
#include "dgan/stmap.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dgan {

inline constexpr std::uint32_t kSequenceVersion = 1;
inline constexpr std::uint32_t kFactorsVersion = 1;

/// "STSQ", u32 version, u64 rows, u64 cols, u64 slots, i64 epoch slot, then
/// row-major float64 maps.
void write_sequence(const STSequence& seq, const std::filesystem::path& path);
STSequence read_sequence(const std::filesystem::path& path);

/// "STFX", u32 version, u64 frames, u64 rows, u64 cols, u64 weather arity,
/// then per frame: poi (row-major), weather, is_weekend.
void write_factors(const FactorSeries& factors, const std::filesystem::path& path);
FactorSeries read_factors(const std::filesystem::path& path);

/// model,horizon,rmse,mae,samples with a leading "# fingerprint" comment.
void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& fingerprint,
                       const std::filesystem::path& path);
nlohmann::json metrics_json(const std::vector<MetricRow>& rows, const std::string& fingerprint);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

/// step,row,col,value for heat-map rendering.
void write_maps_csv(const std::vector<GridMatrix<double>>& maps, const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace dgan
