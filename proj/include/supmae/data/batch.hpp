#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "supmae/data/mask.hpp"
#include "supmae/data/patch.hpp"
#include "supmae/diff/tensor.hpp"

namespace supmae::data {

struct Batch {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t patch_size = 0;
  std::size_t channels = 0;

  // B x V x (P*P*C), gathered in each plan's visible_idx order.
  diff::Tensor<float> visible;
  // B x M x (P*P*C) raw pixels of the masked patches in masked_idx order;
  // empty when nothing is masked.
  std::optional<diff::Tensor<float>> masked_targets;
  std::vector<int> labels;
  std::vector<MaskPlan> plans;

  std::size_t size() const noexcept { return plans.size(); }
  std::size_t num_patches() const noexcept { return grid_h * grid_w; }
  std::size_t patch_dim() const noexcept { return patch_size * patch_size * channels; }
  std::size_t num_visible() const { return plans.front().num_visible(); }
  std::size_t num_masked() const { return plans.front().num_masked(); }

  std::vector<std::vector<std::size_t>> masked_indices() const;
  std::vector<std::vector<std::size_t>> decoder_orders() const;
};

Batch make_batch(std::span<const PatchGrid> grids, std::span<const MaskPlan> plans,
                 std::span<const int> labels);

// B x N x (P*P*C) with every patch in grid order.
diff::Tensor<float> stack_patches(std::span<const PatchGrid> grids);

// Rebuilds each sample's grid from the visible patches and masked targets.
std::vector<PatchGrid> scatter_back(const Batch& batch);

}  // namespace supmae::data
