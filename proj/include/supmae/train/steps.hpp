#pragma once

#include <cstdint>

#include "supmae/data/batch.hpp"
#include "supmae/model/vit.hpp"
#include "supmae/objectives/losses.hpp"

namespace supmae::train {

template <typename T>
struct PretrainOutputs {
  diff::Var<T> total;
  diff::Var<T> pred;    // B x N x K
  diff::Var<T> logits;  // invalid for the reconstruction-only path
  double rec = 0;
  double cls = 0;
};

// Masked encode, decode, classify and the weighted joint loss for one batch.
template <typename T>
PretrainOutputs<T> pretrain_forward(const model::ParamBinding<T>& p, const model::ModelConfig& cfg,
                                    const data::Batch& batch, const objectives::LossWeights& w,
                                    bool norm_pix, model::BatchStats* stats = nullptr,
                                    std::int64_t last_good_step = -1);

// The same step with no classification branch at all: lambda_rec * rec.
template <typename T>
PretrainOutputs<T> reconstruction_only_forward(const model::ParamBinding<T>& p, const model::ModelConfig& cfg,
                                               const data::Batch& batch, const objectives::LossWeights& w,
                                               bool norm_pix);

// Reconstruction targets of a batch: raw masked pixels, standardized per
// patch when norm_pix is set.
template <typename T>
diff::Tensor<T> reconstruction_targets(const data::Batch& batch, bool norm_pix);

}  // namespace supmae::train
