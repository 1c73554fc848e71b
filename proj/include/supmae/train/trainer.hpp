#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "supmae/data/image.hpp"
#include "supmae/data/patch.hpp"
#include "supmae/model/vit.hpp"
#include "supmae/train/config.hpp"
#include "supmae/train/optim.hpp"

namespace supmae::train {

template <typename T>
struct TrainState {
  model::ModelParams<T> params;
  OptState<T> opt;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;   // optimizer steps taken
};

struct BatchRecord {
  Mode mode = Mode::pretrain;
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
  std::uint64_t step = 0;
  double lr = 0;
  double loss = 0;
  double rec = 0;
  double cls = 0;
};

struct EpochMetrics {
  Mode mode = Mode::pretrain;
  std::uint64_t epoch = 0;
  std::size_t batches = 0;
  std::size_t samples = 0;
  double loss = 0;
  double rec = 0;
  double cls = 0;
  double train_accuracy = 0;
  double lr = 0;
  double seconds = 0;
  std::vector<double> batch_losses;
};

using BatchSink = std::function<void(const BatchRecord&)>;

// Full batches per epoch (the ragged tail is dropped).
std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size);

// Sample order of one epoch, a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n);

// Augmented, patchified view of dataset sample `index` for `epoch`.
data::PatchGrid prepare_sample(const data::LabeledImage& sample, const model::ModelConfig& cfg,
                               const AugmentConfig& aug, std::uint64_t seed, std::uint64_t epoch,
                               std::uint64_t index);

// Learning rate of optimizer step `step` under cfg's schedule.
double scheduled_lr(const TrainConfig& cfg, std::size_t steps_per_epoch, std::uint64_t step);

template <typename T>
EpochMetrics pretrain_epoch(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                            const TrainConfig& cfg, const BatchSink& sink = {});

// Pre-training step with no classification branch; the reference for the
// lambda_cls = 0 degenerate case.
template <typename T>
EpochMetrics reconstruction_only_epoch(const data::Dataset& data, TrainState<T>& state,
                                       const model::ModelConfig& mcfg, const TrainConfig& cfg,
                                       const BatchSink& sink = {});

// Drops decoder and pre-training head and attaches a fresh task head.
template <typename T>
void prepare_finetune(model::ModelParams<T>& params, const model::ModelConfig& mcfg, std::size_t num_classes,
                      std::uint64_t seed);

template <typename T>
EpochMetrics finetune_epoch(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                            const TrainConfig& cfg, const BatchSink& sink = {});

// Keeps the encoder and attaches a fresh probe.
template <typename T>
void prepare_linprobe(model::ModelParams<T>& params, const model::ModelConfig& mcfg, std::size_t num_classes,
                      std::uint64_t seed);

// Frozen pooled features of every sample (no augmentation), in dataset order.
template <typename T>
diff::Tensor<T> pooled_features(const model::ModelParams<T>& params, const model::ModelConfig& mcfg,
                                const data::Dataset& data, std::size_t batch_size = 256);

// Features reused across probe epochs when augmentation is off.
template <typename T>
struct ProbeCache {
  std::uint64_t encoder_checksum = 0;
  std::optional<diff::Tensor<T>> features;
};

template <typename T>
EpochMetrics linprobe_epoch(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                            const TrainConfig& cfg, ProbeCache<T>* cache = nullptr, const BatchSink& sink = {});

// Runs cfg.epochs epochs of cfg.mode starting after state.epoch.
template <typename T>
std::vector<EpochMetrics> train(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                                const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {},
                                const BatchSink& sink = {});

}  // namespace supmae::train
