#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "supmae/data/image.hpp"
#include "supmae/run/config_file.hpp"

namespace supmae::eval {

// Axes of the ablation table and their default sweeps:
//   objectives     rec, cls, rec+cls
//   pooling_mode   class_token, global_pool
//   augmentation   randcrop, randcrop+cjit (also: none, randcrop+flip)
//   cls_ratio      0.02, 0.01, 0.005, 0.002
//   decoder_depth  1, 4, 8
//   mlp_layers     1, 2, 3
const std::vector<std::string>& ablation_axes();
std::vector<std::string> default_sweep(const std::string& axis);

// `base` with one axis set to `value`. Unknown axis is a usage error, a bad
// value a config error.
run::RunConfig apply_axis(const run::RunConfig& base, const std::string& axis, const std::string& value);

struct AblationRow {
  std::string axis;
  std::string value;
  std::uint64_t seed = 0;
  double pretrain_loss = 0;  // last-epoch joint loss
  double finetune_accuracy = 0;
  double linprobe_accuracy = 0;
  std::uint64_t fingerprint = 0;
};

using RowSink = std::function<void(const AblationRow&)>;

// For each value and each of cfg.ablate_seeds seeds: pretrain, then a linear
// probe and a fine-tune from the pre-trained weights, scored on `test`.
// Values come from cfg.ablate_values or the axis default.
template <typename T>
std::vector<AblationRow> ablation_grid(const run::RunConfig& cfg, const data::Dataset& train_set,
                                       const data::Dataset& test, const RowSink& on_row = {});

// Per-value means over seeds, one line per value, header first.
std::string ablation_tsv(const std::vector<AblationRow>& rows);
std::string ablation_jsonl(const std::vector<AblationRow>& rows);

}  // namespace supmae::eval
