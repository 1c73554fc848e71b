#include "supmae/data/batch.hpp"

#include <algorithm>

#include "supmae/error.hpp"

namespace supmae::data {
namespace {

void check_geometry(std::span<const PatchGrid> grids) {
  if (grids.empty()) fail(ErrorCategory::usage, "empty batch");
  const auto& f = grids.front();
  for (const auto& g : grids) {
    if (g.grid_h != f.grid_h || g.grid_w != f.grid_w || g.patch_size != f.patch_size ||
        g.channels != f.channels) {
      fail(ErrorCategory::geometry, "batch mixes patch geometries");
    }
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> Batch::masked_indices() const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(plans.size());
  for (const auto& p : plans) out.push_back(p.masked_idx);
  return out;
}

std::vector<std::vector<std::size_t>> Batch::decoder_orders() const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(plans.size());
  for (const auto& p : plans) out.push_back(p.shuffle_perm);
  return out;
}

Batch make_batch(std::span<const PatchGrid> grids, std::span<const MaskPlan> plans,
                 std::span<const int> labels) {
  check_geometry(grids);
  if (plans.size() != grids.size() || labels.size() != grids.size()) {
    fail(ErrorCategory::contract, "make_batch needs one plan and one label per sample");
  }
  const auto& f = grids.front();
  const std::size_t n = f.num_patches(), k = f.patch_dim(), b = grids.size();
  const std::size_t v = plans.front().num_visible();
  for (const auto& p : plans) {
    validate_plan(p);
    if (p.num_patches != n) fail(ErrorCategory::contract, "plan covers a different patch count");
    if (p.num_visible() != v) fail(ErrorCategory::contract, "visible count differs across the batch");
  }
  const std::size_t m = n - v;
  Batch out;
  out.grid_h = f.grid_h;
  out.grid_w = f.grid_w;
  out.patch_size = f.patch_size;
  out.channels = f.channels;
  out.visible = diff::Tensor<float>(diff::Shape{b, v, k});
  if (m > 0) out.masked_targets = diff::Tensor<float>(diff::Shape{b, m, k});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      const float* src = grids[i].patch(plans[i].visible_idx[j]);
      std::copy_n(src, k, out.visible.data().data() + (i * v + j) * k);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const float* src = grids[i].patch(plans[i].masked_idx[j]);
      std::copy_n(src, k, out.masked_targets->data().data() + (i * m + j) * k);
    }
  }
  out.labels.assign(labels.begin(), labels.end());
  out.plans.assign(plans.begin(), plans.end());
  return out;
}

diff::Tensor<float> stack_patches(std::span<const PatchGrid> grids) {
  check_geometry(grids);
  const std::size_t n = grids.front().num_patches(), k = grids.front().patch_dim();
  diff::Tensor<float> out(diff::Shape{grids.size(), n, k});
  for (std::size_t i = 0; i < grids.size(); ++i)
    std::copy(grids[i].patches.begin(), grids[i].patches.end(), out.data().data() + i * n * k);
  return out;
}

std::vector<PatchGrid> scatter_back(const Batch& batch) {
  const std::size_t b = batch.size(), k = batch.patch_dim();
  const std::size_t v = batch.num_visible(), m = batch.num_masked();
  std::vector<PatchGrid> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    auto& g = out[i];
    g.grid_h = batch.grid_h;
    g.grid_w = batch.grid_w;
    g.patch_size = batch.patch_size;
    g.channels = batch.channels;
    g.patches.assign(g.num_patches() * k, 0.0f);
    for (std::size_t j = 0; j < v; ++j)
      std::copy_n(batch.visible.data().data() + (i * v + j) * k, k, g.patch(batch.plans[i].visible_idx[j]));
    for (std::size_t j = 0; j < m; ++j)
      std::copy_n(batch.masked_targets->data().data() + (i * m + j) * k, k,
                  g.patch(batch.plans[i].masked_idx[j]));
  }
  return out;
}

}  // namespace supmae::data
