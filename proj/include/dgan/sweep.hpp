// Ablation sweeps: history length, external-factor subsets, rollout horizon.
#pragma once

#include "dgan/evaluate.hpp"
#include "dgan/model.hpp"
#include "dgan/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace dgan {

struct SweepRow {
  std::string label;  // "T=8", "ExF1", "S=10", ...
  Index seq_len = 0;
  bool skipped = false;
  std::string note;                // reason when skipped
  std::vector<MetricRow> metrics;  // horizons 1..S
};

struct SweepTable {
  std::string axis;
  std::string fingerprint;
  std::vector<SweepRow> rows;
};

struct SweepInputs {
  std::shared_ptr<const STSequence> raw;
  std::shared_ptr<const FactorSeries> factors;  // may be empty
  ArchSpec arch;
  TrainConfig train;
  EvalConfig eval;
  std::string fingerprint;
};

/// One model per T, identical seeds; each evaluated over horizons 1..steps.
/// Infeasible lengths give a skipped row instead of an error.
SweepTable seq_length_sweep(const SweepInputs& in, const std::vector<Index>& lengths, Index steps);

/// ExF1 = {PoI}, ExF2 = {PoI, weekday}, ExF3 = {PoI, weekday, weather},
/// ExF3_w = no factors.
SweepTable external_factor_sweep(const SweepInputs& in, Index steps);

/// One model, one row per horizon 1..steps.
SweepTable rollout_steps_sweep(const SweepInputs& in, Index steps);

SweepTable run_sweep(const std::string& axis, const SweepInputs& in, const std::vector<Index>& lengths,
                     Index steps);

/// axis,label,seq_len,horizon,rmse,mae,status with a "# fingerprint" line.
void write_sweep_csv(const SweepTable& table, const std::filesystem::path& path);
nlohmann::json sweep_json(const SweepTable& table);

}  // namespace dgan
