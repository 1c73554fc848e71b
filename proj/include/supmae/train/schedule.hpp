#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace supmae::train {

// base_lr * batch_size / 256
double scaled_lr(double base_lr, std::size_t batch_size);

// Linear ramp 0 -> peak over warmup_steps, then half-cosine from peak to min_lr
// over the remaining steps (the last step lands on min_lr).
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double peak_lr,
             double min_lr);

// Group g of [patch-embed/pos/cls, block 0 .. block L-1, head] gets
// decay^(L+1-g); the head group is L+1 with multiplier 1.
std::vector<double> layerwise_multipliers(std::size_t encoder_depth, double decay);

// Group index of a parameter under that assignment.
std::size_t layer_group(const std::string& name, std::size_t encoder_depth);

}  // namespace supmae::train
