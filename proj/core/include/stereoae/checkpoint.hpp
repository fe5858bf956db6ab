#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "stereoae/encoder.hpp"
#include "stereoae/trainer.hpp"

namespace stereoae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "SAECKPT1" | u32 version | u64 config hash | str architecture json
//   u32 active stages | u64 network seed | u8 element size (4 or 8)
//   i32 phase | i32 epoch | i32 global epoch | u64 state seed | str rng
//   u32 n | n x (str name | u32 rank | rank x i32 dims | raw elements)   params
//   u32 n | n x (same)                                                 velocity
//   u32 n | n x (i32 phase, stage, epoch | f64 lr, recons, smooth, total)
// where str is a u32 byte count followed by the bytes.
struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  NetworkConfig architecture;
  int active_stages = 0;
  std::uint64_t network_seed = 0;
  int element_size = 0;
};

template <typename T>
struct LoadedCheckpoint {
  CheckpointHeader header;
  std::optional<Network<T>> network;
  TrainState<T> state;
};

// Written to a temporary file and renamed into place.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, const TrainState<T>& state,
                     std::uint64_t config_hash);

// Throws IoError on a truncated or foreign file, ConfigError on an
// element-size or layout mismatch.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

}  // namespace stereoae
