#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "supmae/data/image.hpp"
#include "supmae/model/vit.hpp"

namespace supmae::eval {

enum class HeadKind { pretrain, task, probe };

struct EvalReport {
  double accuracy = 0;
  std::vector<double> per_class_accuracy;
  // Mean cross-entropy of softmax(logits / tau).
  double loss = 0;
  std::size_t n_samples = 0;
  std::uint64_t fingerprint = 0;
  double keep_ratio = 1.0;
  std::vector<int> predictions;
};

// Argmax accuracy with frozen statistics. Each sample's logits depend on that
// sample alone, so the report does not depend on batch_size.
template <typename T>
EvalReport evaluate_accuracy(const model::ModelParams<T>& params, const model::ModelConfig& cfg,
                             const data::Dataset& data, HeadKind head, std::size_t batch_size = 256,
                             double tau = 1.0);

// Pre-training pathway on a seeded subset of round(keep_ratio * N) patches.
template <typename T>
EvalReport partial_patch_accuracy(const model::ModelParams<T>& params, const model::ModelConfig& cfg,
                                  const data::Dataset& data, double keep_ratio, std::uint64_t mask_seed,
                                  std::size_t batch_size = 256);

struct PartialReport {
  double keep_ratio = 1.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 for one seed
};

template <typename T>
PartialReport partial_patch_inference(const model::ModelParams<T>& params, const model::ModelConfig& cfg,
                                      const data::Dataset& data, double keep_ratio,
                                      const std::vector<std::uint64_t>& mask_seeds, std::size_t batch_size = 256);

// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

}  // namespace supmae::eval
