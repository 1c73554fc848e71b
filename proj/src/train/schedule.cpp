#include "supmae/train/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "supmae/error.hpp"

namespace supmae::train {

double scaled_lr(double base_lr, std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorCategory::config, "batch_size must be >= 1");
  return base_lr * static_cast<double>(batch_size) / 256.0;
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double peak_lr,
             double min_lr) {
  if (total_steps == 0 || warmup_steps >= total_steps) {
    fail(ErrorCategory::config, "schedule needs warmup_steps < total_steps (" + std::to_string(warmup_steps) +
                                    " vs " + std::to_string(total_steps) + ")");
  }
  if (step < warmup_steps) return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const std::size_t span = total_steps - 1 - warmup_steps;
  const double progress =
      span == 0 ? 1.0 : std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
  return min_lr + (peak_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<double> layerwise_multipliers(std::size_t encoder_depth, double decay) {
  if (!(decay > 0 && decay <= 1)) fail(ErrorCategory::config, "layerwise decay must be in (0, 1]");
  std::vector<double> out(encoder_depth + 2);
  for (std::size_t g = 0; g < out.size(); ++g) {
    out[g] = std::pow(decay, static_cast<double>(encoder_depth + 1 - g));
  }
  return out;
}

std::size_t layer_group(const std::string& name, std::size_t encoder_depth) {
  if (name.rfind("patch_embed.", 0) == 0 || name == "cls_token" || name == "pos_embed") return 0;
  if (name.rfind("blocks.", 0) == 0) {
    const auto end = name.find('.', 7);
    const std::size_t i = std::stoul(name.substr(7, end - 7));
    return std::min(i + 1, encoder_depth);
  }
  return encoder_depth + 1;
}

}  // namespace supmae::train
