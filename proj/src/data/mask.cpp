#include "supmae/data/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "supmae/error.hpp"
#include "supmae/log.hpp"

namespace supmae::data {

std::size_t masked_count(std::size_t n_patches, double ratio) {
  const auto m = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_patches)));
  return std::min(m, n_patches - 1);
}

MaskPlan build_mask_plan(std::size_t n_patches, double ratio, Rng& rng) {
  if (n_patches == 0) fail(ErrorCategory::usage, "mask plan needs at least one patch");
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    fail(ErrorCategory::config, "mask_ratio must lie in [0,1), got " + std::to_string(ratio));
  }
  const auto rounded = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_patches)));
  const std::size_t m = masked_count(n_patches, ratio);
  if (m != rounded) {
    log_warning("mask ratio " + std::to_string(ratio) + " would hide all " +
                std::to_string(n_patches) + " patches; keeping one visible");
  }
  std::vector<double> noise(n_patches);
  for (auto& v : noise) v = rng.uniform();
  std::vector<std::size_t> order(n_patches);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return noise[a] < noise[b]; });

  MaskPlan plan;
  plan.num_patches = n_patches;
  plan.ratio = ratio;
  const std::size_t v = n_patches - m;
  plan.visible_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(v));
  plan.masked_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(v), order.end());
  std::sort(plan.visible_idx.begin(), plan.visible_idx.end());
  std::sort(plan.masked_idx.begin(), plan.masked_idx.end());
  plan.shuffle_perm = plan.visible_idx;
  plan.shuffle_perm.insert(plan.shuffle_perm.end(), plan.masked_idx.begin(), plan.masked_idx.end());
  return plan;
}

MaskPlan plan_for(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample_index,
                  std::size_t n_patches, double ratio) {
  Rng rng = Rng::derive(seed, Stream::mask, {epoch, sample_index});
  return build_mask_plan(n_patches, ratio, rng);
}

MaskPlan full_visibility_plan(std::size_t n_patches) {
  MaskPlan plan;
  plan.num_patches = n_patches;
  plan.ratio = 0;
  plan.visible_idx.resize(n_patches);
  std::iota(plan.visible_idx.begin(), plan.visible_idx.end(), std::size_t{0});
  plan.shuffle_perm = plan.visible_idx;
  return plan;
}

void validate_plan(const MaskPlan& plan) {
  const std::size_t n = plan.num_patches;
  if (plan.visible_idx.empty()) fail(ErrorCategory::contract, "mask plan has no visible patch");
  if (plan.visible_idx.size() + plan.masked_idx.size() != n || plan.shuffle_perm.size() != n) {
    fail(ErrorCategory::contract, "mask plan does not partition " + std::to_string(n) + " patches");
  }
  std::vector<int> seen(n, 0);
  for (auto i : plan.visible_idx) {
    if (i >= n) fail(ErrorCategory::contract, "mask plan index out of range");
    ++seen[i];
  }
  for (auto i : plan.masked_idx) {
    if (i >= n) fail(ErrorCategory::contract, "mask plan index out of range");
    ++seen[i];
  }
  if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
    fail(ErrorCategory::contract, "mask plan visible/masked sets overlap or miss patches");
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto expect = j < plan.visible_idx.size() ? plan.visible_idx[j]
                                                    : plan.masked_idx[j - plan.visible_idx.size()];
    if (plan.shuffle_perm[j] != expect) {
      fail(ErrorCategory::contract, "mask plan shuffle_perm disagrees with its index sets");
    }
  }
}

}  // namespace supmae::data
