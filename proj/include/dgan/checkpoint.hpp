// Binary checkpoint container: a JSON header followed by named float64
// tensors. Tensors round-trip bit-exactly.
#pragma once

#include "dgan/model.hpp"
#include "dgan/stmap.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dgan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  DGanModel model;
  MinMaxScaler scaler;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
};

/// Guards applied on load; unset fields are not checked.
struct CheckpointExpectation {
  std::optional<Index> rows;
  std::optional<Index> cols;
  std::optional<std::string> config_hash;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expect = {});

}  // namespace dgan
