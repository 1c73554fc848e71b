#pragma once

// Checkpoint file layout, all integers little-endian:
//
//   "SMAE" | u32 version | u32 len, config text
//   u32 count | count x tensor record
//   u8 has_optimizer | [u64 step | u32 count | count x (u32 len, name, m, v)]
//   u64 rng seed | u64 epoch | u64 step
//   u32 CRC-32 of every preceding byte
//
// tensor record: u32 len, UTF-8 name | u8 dtype (2 = f32, 3 = f64) |
//                u8 kind | u8 rank | rank x u32 extents | IEEE-754 payload
// m and v use the same record without the name and kind fields.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "supmae/model/params.hpp"
#include "supmae/train/optim.hpp"

namespace supmae::run {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 2;
inline constexpr std::uint8_t kDtypeF64 = 3;

template <typename T>
struct Checkpoint {
  std::string config_text;
  model::ModelParams<T> params;
  std::optional<train::OptState<T>> opt;
  // Master seed; every random stream is derived from it and the position.
  std::uint64_t rng_seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint<T>& ckpt);

// Throws corruption (bad magic, CRC mismatch, truncation, malformed record,
// with byte offset), migration (unknown version) or load (dtype differs from
// T) errors.
template <typename T>
Checkpoint<T> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes to `path` via a temporary file and rename.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ckpt);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

// Header fields readable without knowing the payload precision.
struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint8_t dtype = 0;
  std::string config_text;
  struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint8_t kind = 0;
  };
  std::vector<TensorInfo> tensors;
  bool has_optimizer = false;
  std::uint64_t rng_seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint32_t crc = 0;
};

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path);

enum class LoadMode {
  full,    // every tensor of `dst` must be present
  subset,  // tensors absent from the checkpoint keep their current values
};

// Copies tensors of `src` into same-named tensors of `dst` (shape-checked).
// Tensors of `src` unknown to `dst` are ignored. Returns the names copied.
template <typename T>
std::vector<std::string> restore_params(model::ModelParams<T>& dst, const model::ModelParams<T>& src, LoadMode mode);

}  // namespace supmae::run
