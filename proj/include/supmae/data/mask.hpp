#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "supmae/rng.hpp"

namespace supmae::data {

// Which patches of one sample the encoder sees.
//
// `shuffle_perm` is the token order the decoder pads into: the visible
// indices followed by the masked ones. Sequence slot j of the padded
// decoder input belongs to patch shuffle_perm[j].
struct MaskPlan {
  std::size_t num_patches = 0;
  double ratio = 0;
  std::vector<std::size_t> visible_idx;
  std::vector<std::size_t> masked_idx;
  std::vector<std::size_t> shuffle_perm;

  std::size_t num_visible() const noexcept { return visible_idx.size(); }
  std::size_t num_masked() const noexcept { return masked_idx.size(); }

  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

// Masked count for n patches: round(ratio * n), leaving at least one visible.
std::size_t masked_count(std::size_t n_patches, double ratio);

// Argsort of per-patch uniform noise; the lowest-noise patches stay visible.
MaskPlan build_mask_plan(std::size_t n_patches, double ratio, Rng& rng);

// The plan for (seed, epoch, sample index) on the mask stream.
MaskPlan plan_for(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample_index,
                  std::size_t n_patches, double ratio);

// Every patch visible, identity order.
MaskPlan full_visibility_plan(std::size_t n_patches);

// Partition check used by callers receiving plans from outside.
void validate_plan(const MaskPlan& plan);

}  // namespace supmae::data
