#pragma once

// Encoder, decoder and heads of the supervised masked autoencoder.
//
//   visible patches -> PatchEmbed + pos rows -> pre-norm blocks -> norm -> q_v
//   q_v -> decoder_embed -> pad with mask_token, unshuffle -> + decoder pos
//       -> decoder blocks -> decoder_norm -> decoder_pred (pixels, all N)
//   q_v -> mean pool (or class token) -> MLP with BatchNorm+ReLU -> logits

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "supmae/data/mask.hpp"
#include "supmae/diff/ops.hpp"
#include "supmae/model/config.hpp"
#include "supmae/model/params.hpp"

namespace supmae::model {

// Fixed 2-D sin-cos table. The first dim/2 columns encode the grid row, the
// rest the grid column; each half interleaves (sin, cos) pairs for
// frequencies 10000^(-i / (dim/4)). With `class_slot` a zero row is prepended.
template <typename T>
diff::Tensor<T> sincos_pos_embed(std::size_t grid_h, std::size_t grid_w, std::size_t dim,
                                 bool class_slot);

// Encoder, decoder and pre-training head, deterministic in `seed`.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// Keeps the encoder only (fine-tuning / probing start from this).
template <typename T>
void strip_to_encoder(ModelParams<T>& params);

// Fresh linear task head "task_head.{weight,bias}" on the pooled feature.
template <typename T>
void add_task_head(ModelParams<T>& params, const ModelConfig& cfg, std::size_t num_classes,
                   std::uint64_t seed);

// Fresh probe: non-affine BatchNorm "probe.bn" followed by "probe.fc".
template <typename T>
void add_probe_head(ModelParams<T>& params, const ModelConfig& cfg, std::size_t num_classes,
                    std::uint64_t seed);

// Pre-norm transformer block over x[B, L, d] with parameters
// "<prefix>.{norm1, attn.qkv, attn.proj, norm2, mlp.fc1, mlp.fc2}".
template <typename T>
diff::Var<T> block_forward(const ParamBinding<T>& p, const std::string& prefix, diff::Var<T> x, std::size_t heads);

template <typename T>
struct EncoderOutput {
  diff::Var<T> tokens;         // B x V x d, in visible_idx order
  diff::Var<T> class_feature;  // B x d; class_token mode only
};

template <typename T>
EncoderOutput<T> encode_visible(const ParamBinding<T>& p, const ModelConfig& cfg,
                                const diff::Tensor<T>& visible,
                                const std::vector<data::MaskPlan>& plans);

// Same weights and code path with the all-visible plan.
template <typename T>
EncoderOutput<T> encode_full(const ParamBinding<T>& p, const ModelConfig& cfg,
                             const diff::Tensor<T>& patches);

// Predicted pixels for all N patches in original order: B x N x (P*P*C).
template <typename T>
diff::Var<T> decode_reconstruct(const ParamBinding<T>& p, const ModelConfig& cfg, diff::Var<T> q_v,
                                const std::vector<data::MaskPlan>& plans);

// Global mean of the patch tokens, or the class-token feature.
template <typename T>
diff::Var<T> pooled_feature(const ModelConfig& cfg, const EncoderOutput<T>& enc);

enum class NormMode { train, eval };

// Batch moments observed by each BatchNorm layer during a train-mode pass.
using BatchStats = std::vector<std::pair<std::string, diff::BatchMoments>>;

// Pre-training classification MLP ("head.*"). Logits are raw; the temperature
// belongs to the loss.
template <typename T>
diff::Var<T> classify_pooled(const ParamBinding<T>& p, const ModelConfig& cfg,
                             const EncoderOutput<T>& enc, NormMode mode, BatchStats* stats = nullptr);

template <typename T>
diff::Var<T> task_head_logits(const ParamBinding<T>& p, diff::Var<T> pooled);

template <typename T>
diff::Var<T> probe_logits(const ParamBinding<T>& p, diff::Var<T> pooled, NormMode mode,
                          BatchStats* stats = nullptr);

// running = (1 - momentum) running + momentum batch, variance unbiased.
template <typename T>
void update_running_stats(ModelParams<T>& params, const BatchStats& stats, std::size_t batch,
                          double momentum = 0.1);

}  // namespace supmae::model
