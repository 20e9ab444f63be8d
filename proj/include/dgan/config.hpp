// Run configuration: JSON schema, validation and fingerprinting.
#pragma once

#include "dgan/evaluate.hpp"
#include "dgan/ingest.hpp"
#include "dgan/model.hpp"
#include "dgan/synthgen.hpp"
#include "dgan/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgan {

using Json = nlohmann::json;

/// Invalid or unknown configuration field; `what()` names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct IngestConfig {
  std::filesystem::path trips;
  ColumnMapping columns;
  std::string start = "";  // first slot timestamp, same format as the trip file
  Index num_slots = 0;
  std::filesystem::path weather;
  std::filesystem::path poi;
  std::string weather_time_column = "timestamp";
};

struct SynthConfig {
  SynthProcess process;
  Index num_slots = 2000;
};

struct DataConfig {
  std::filesystem::path dir;  // holds sequence.bin / factors.bin
};

struct SweepConfig {
  std::string axis = "seq_length";  // seq_length | external_factors | rollout_steps
  std::vector<Index> lengths{8, 12, 24};
  Index steps = 10;
};

struct PredictConfig {
  std::filesystem::path checkpoint;
  Index steps = 10;
  std::int64_t window = -1;  // index into the test windows; negative counts from the end
};

struct RunConfig {
  std::optional<GridSpec> grid;
  std::optional<IngestConfig> ingest;
  SynthConfig synth;
  DataConfig data;
  ArchSpec arch;
  TrainConfig train;
  EvalConfig eval;
  std::filesystem::path eval_checkpoint;
  PredictConfig predict;
  SweepConfig sweep;

  Json raw;  // canonical form after overrides

  std::string fingerprint() const;
};

Json to_json(const ArchSpec& a);
ArchSpec arch_from_json(const Json& j, const std::string& where = "arch");
Json to_json(const TrainConfig& t);
TrainConfig train_from_json(const Json& j, const std::string& where = "train");
Json to_json(const SynthProcess& p);
SynthProcess synth_from_json(const Json& j, const std::string& where = "synth");
Json to_json(const MinMaxScaler& s);
MinMaxScaler scaler_from_json(const Json& j);

/// Parses and validates a run configuration. Unknown keys are rejected.
RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string fingerprint(const Json& j);

}  // namespace dgan
