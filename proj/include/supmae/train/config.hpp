#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "supmae/data/augment.hpp"
#include "supmae/model/config.hpp"
#include "supmae/objectives/losses.hpp"
#include "supmae/train/optim.hpp"

namespace supmae::train {

enum class Mode { pretrain, finetune, linprobe };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

struct AugmentConfig {
  bool random_resized_crop = true;
  bool horizontal_flip = false;
  // Accepted and ignored.
  bool color_jitter = false;
  data::CropParams crop;

  bool any() const { return random_resized_crop || horizontal_flip; }
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

struct TrainConfig {
  Mode mode = Mode::pretrain;
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 5;
  std::size_t batch_size = 128;
  double base_lr = 1.5e-4;
  double min_lr = 0.0;
  AdamWConfig adamw;
  double mask_ratio = 0.75;
  objectives::LossWeights loss;
  bool norm_pix = true;
  double label_smoothing = 0.0;
  double layerwise_decay = 1.0;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  // Micro-batches per optimizer step.
  std::size_t accum_steps = 1;

  double peak_lr() const;
  void validate(const model::ModelConfig& model) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Recipe defaults for each mode at desk scale.
TrainConfig defaults_for(Mode mode);

}  // namespace supmae::train
