#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "supmae/data/image.hpp"

namespace supmae::data {

enum class DatasetFormat { idx_ubyte, raw_tensor_dir, csv_pixels };

DatasetFormat parse_format(const std::string& name);
std::string format_name(DatasetFormat f);

struct LoadOptions {
  // When set, labels must lie in [0, num_classes); otherwise the class count
  // is max label + 1.
  std::optional<int> num_classes;
  // csv-pixels rows carry no geometry: rows hold channels * s * s values.
  std::size_t csv_channels = 1;
};

// idx-ubyte: `path` is a directory holding one *images* and one *labels* file,
//   or the images file itself (labels found by substituting "labels"/"idx1").
// raw-tensor-dir: `path` holds *.rtd sample files plus labels.tsv.
// csv-pixels: `path` is the csv file.
// Samples come back in record/filename order with pixels scaled to [0, 1].
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const LoadOptions& options = {});

// raw-tensor-dir sample file: "RTD1", u8 dtype, u8 rank, u16 reserved (0),
// rank x u32 LE extents, LE payload. dtype 1 = u8 (pixel/255), 2 = f32, 3 = f64.
inline constexpr std::uint8_t kRtdU8 = 1;
inline constexpr std::uint8_t kRtdF32 = 2;
inline constexpr std::uint8_t kRtdF64 = 3;

// Writes `ds` as raw-tensor-dir (u8 payload, rank 3 H x W x C), files named
// 000000.rtd, 000001.rtd, ... and labels.tsv.
void write_raw_tensor_dir(const Dataset& ds, const std::filesystem::path& dir);

// Writes `ds` as an idx-ubyte pair <prefix>-images-idx3-ubyte and
// <prefix>-labels-idx1-ubyte in `dir` (single-channel images only).
void write_idx_ubyte(const Dataset& ds, const std::filesystem::path& dir, const std::string& prefix);

}  // namespace supmae::data
