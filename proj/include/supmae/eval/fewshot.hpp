#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "supmae/data/image.hpp"
#include "supmae/model/vit.hpp"
#include "supmae/run/config_file.hpp"

namespace supmae::eval {

// `shots` samples per class drawn from `pool` with the few-shot stream of
// (seed, shots). Shots above a class's size are clamped with a warning; a
// class without samples is a protocol error.
std::vector<std::size_t> sample_shots(const data::Dataset& pool, std::size_t shots, std::uint64_t seed,
                                      std::size_t* clamped_to = nullptr);

// Shuffled 80/20 train/validation split of `indices` (validation keeps at
// least one sample when there are two or more).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(const std::vector<std::size_t>& indices,
                                                                            std::uint64_t seed);

struct FewshotTrial {
  std::uint64_t seed = 0;
  double lr = 0;
  double weight_decay = 0;
  double val_accuracy = 0;  // NaN when the search was skipped
  double test_accuracy = 0;
  std::size_t train_samples = 0;
};

struct FewshotReport {
  train::Mode mode = train::Mode::linprobe;
  std::size_t shots = 0;  // after clamping
  std::vector<FewshotTrial> trials;
  double mean = 0;
  double std = 0;
  std::uint64_t fingerprint = 0;
};

// Grid search of (lr, weight decay) on the 80/20 split for search_epochs,
// then the best pair trained on all sampled shots for final_epochs and scored
// on `test`. A one-point grid skips the search.
template <typename T>
FewshotReport fewshot_protocol(const model::ModelParams<T>& pretrained, const run::RunConfig& cfg,
                               const data::Dataset& pool, const data::Dataset& test);

}  // namespace supmae::eval
