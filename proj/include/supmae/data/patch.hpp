#pragma once

#include <cstddef>
#include <vector>

#include "supmae/data/image.hpp"

namespace supmae::data {

// N x (P*P*C) patch matrix. Patches are ordered row-major over the grid
// (top-left to bottom-right); each patch is flattened (row, col, channel).
struct PatchGrid {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t patch_size = 0;
  std::size_t channels = 0;
  std::vector<float> patches;

  std::size_t num_patches() const noexcept { return grid_h * grid_w; }
  std::size_t patch_dim() const noexcept { return patch_size * patch_size * channels; }
  const float* patch(std::size_t i) const { return patches.data() + i * patch_dim(); }
  float* patch(std::size_t i) { return patches.data() + i * patch_dim(); }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

PatchGrid patchify(const Image& img, std::size_t patch_size);
Image depatchify(const PatchGrid& grid);

}  // namespace supmae::data
