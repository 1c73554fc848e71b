#include "supmae/train/config.hpp"

#include "supmae/error.hpp"
#include "supmae/train/schedule.hpp"

namespace supmae::train {

Mode parse_mode(const std::string& s) {
  if (s == "pretrain") return Mode::pretrain;
  if (s == "finetune") return Mode::finetune;
  if (s == "linprobe") return Mode::linprobe;
  fail(ErrorCategory::config, "mode must be pretrain, finetune or linprobe, got '" + s + "'");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::pretrain: return "pretrain";
    case Mode::finetune: return "finetune";
    case Mode::linprobe: return "linprobe";
  }
  return "?";
}

double TrainConfig::peak_lr() const { return scaled_lr(base_lr, batch_size); }

void TrainConfig::validate(const model::ModelConfig& model) const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCategory::config, what);
  };
  need(epochs >= 1, "epochs must be >= 1");
  need(warmup_epochs <= epochs, "warmup_epochs must not exceed epochs");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(accum_steps >= 1 && batch_size % accum_steps == 0, "batch_size must be a multiple of accum_steps");
  need(mask_ratio >= 0 && mask_ratio < 1, "mask_ratio must be in [0, 1)");
  need(base_lr >= 0 && min_lr >= 0, "learning rates must be nonnegative");
  need(adamw.beta1 >= 0 && adamw.beta1 < 1 && adamw.beta2 >= 0 && adamw.beta2 < 1, "betas must be in [0, 1)");
  need(adamw.weight_decay >= 0, "weight_decay must be nonnegative");
  need(label_smoothing >= 0 && label_smoothing < 1, "label_smoothing must be in [0, 1)");
  need(layerwise_decay > 0 && layerwise_decay <= 1, "layerwise_decay must be in (0, 1]");
  const bool batch_stats = (mode == Mode::pretrain && model.head_layers > 1) || mode == Mode::linprobe;
  need(!batch_stats || batch_size / accum_steps >= 2,
       "batch statistics need at least 2 samples per micro-batch");
  loss.validate();
}

TrainConfig defaults_for(Mode mode) {
  TrainConfig c;
  c.mode = mode;
  switch (mode) {
    case Mode::pretrain:
      break;
    case Mode::finetune:
      c.epochs = 20;
      c.warmup_epochs = 2;
      c.base_lr = 1e-3;
      c.adamw.beta2 = 0.999;
      c.layerwise_decay = 0.65;
      c.label_smoothing = 0.1;
      c.mask_ratio = 0.0;
      break;
    case Mode::linprobe:
      c.epochs = 20;
      c.warmup_epochs = 2;
      c.base_lr = 1e-2;
      c.adamw.beta2 = 0.999;
      c.adamw.weight_decay = 0.0;
      c.mask_ratio = 0.0;
      c.augment.random_resized_crop = false;
      break;
  }
  return c;
}

}  // namespace supmae::train
