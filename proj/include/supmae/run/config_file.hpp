#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "supmae/data/toyset.hpp"
#include "supmae/model/config.hpp"
#include "supmae/train/config.hpp"

namespace supmae::run {

// Where samples come from. "toy" renders the synthetic shape set; the other
// formats read train_path / test_path from disk.
struct DataConfig {
  std::string format = "toy";
  std::string train_path;
  std::string test_path;
  std::size_t csv_channels = 1;
  data::ToySpec toy;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct FewshotConfig {
  std::size_t shots = 5;
  train::Mode mode = train::Mode::linprobe;
  std::vector<double> lrs{1e-4, 3e-4, 1e-3, 3e-3};
  std::vector<double> wds{0.0, 1e-4, 1e-2};
  std::size_t seeds = 3;
  std::size_t search_epochs = 10;
  std::size_t final_epochs = 50;

  friend bool operator==(const FewshotConfig&, const FewshotConfig&) = default;
};

// Everything one CLI invocation needs.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  DataConfig data;

  // Downstream stages of pipelines (ablate) that follow a pre-training run;
  // they reuse train.batch_size.
  std::size_t probe_epochs = 20;
  double probe_lr = 1e-2;
  std::size_t finetune_epochs = 20;
  double finetune_lr = 1e-3;

  // Run-log record every N batches (0: epoch records only).
  std::size_t log_every = 0;
  // Wall-clock fields in the run log; off keeps logs reproducible.
  bool log_timing = false;
  // Checkpoint every N epochs (0: final checkpoint only).
  std::size_t save_every = 0;

  std::size_t eval_batch_size = 256;
  std::string eval_head = "auto";
  double partial_keep = 0.25;
  std::size_t partial_seeds = 5;

  FewshotConfig fewshot;

  std::string ablate_axis = "objectives";
  // Comma-separated; empty selects the axis default sweep.
  std::string ablate_values;
  std::size_t ablate_seeds = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Built-in defaults with the recipe of `mode`.
RunConfig default_config(train::Mode mode);

// Applies `key = value` lines ('#' starts a comment). Unknown keys, malformed
// lines and unparsable values are config errors naming the key and `origin`.
void apply_text(RunConfig& cfg, std::string_view text, std::string_view origin);

// Applies one `key=value` assignment.
void apply_assignment(RunConfig& cfg, std::string_view assignment, std::string_view origin);

// Sorted `key = value` lines with round-trip number formatting.
// apply_text(default, canonical_text(c)) reproduces c.
std::string canonical_text(const RunConfig& cfg);

// FNV-1a 64 of canonical_text.
std::uint64_t fingerprint(const RunConfig& cfg);
std::string fingerprint_hex(std::uint64_t fp);

// Model and training invariants plus the run-level knobs.
void validate(const RunConfig& cfg);

// The closed key set, sorted.
std::vector<std::string> config_keys();

// Keys that describe the network architecture (taken over from a checkpoint).
bool is_model_key(const std::string& key);

// Lines of `text` whose key satisfies is_model_key, re-emitted canonically.
std::string model_section(const std::string& canonical);

}  // namespace supmae::run
