#include "supmae/train/steps.hpp"

#include "supmae/diff/ops.hpp"
#include "supmae/error.hpp"

namespace supmae::train {

using diff::Tensor;
using diff::Var;

namespace {

template <typename T>
Var<T> rec_term(const model::ParamBinding<T>& p, const model::ModelConfig& cfg, const data::Batch& batch,
                const model::EncoderOutput<T>& enc, bool norm_pix, Var<T>& pred) {
  pred = model::decode_reconstruct(p, cfg, enc.tokens, batch.plans);
  if (!batch.masked_targets) return p.graph().constant(Tensor<T>::scalar(T{0}));
  return objectives::reconstruction_loss(pred, reconstruction_targets<T>(batch, norm_pix), batch.plans);
}

}  // namespace

template <typename T>
Tensor<T> reconstruction_targets(const data::Batch& batch, bool norm_pix) {
  if (!batch.masked_targets) fail(ErrorCategory::contract, "batch has no masked patches");
  auto raw = batch.masked_targets->template cast<T>();
  return norm_pix ? objectives::norm_pix_targets(raw) : raw;
}

template <typename T>
PretrainOutputs<T> pretrain_forward(const model::ParamBinding<T>& p, const model::ModelConfig& cfg,
                                    const data::Batch& batch, const objectives::LossWeights& w, bool norm_pix,
                                    model::BatchStats* stats, std::int64_t last_good_step) {
  PretrainOutputs<T> out;
  auto enc = model::encode_visible(p, cfg, batch.visible.template cast<T>(), batch.plans);
  auto rec = rec_term(p, cfg, batch, enc, norm_pix, out.pred);
  out.logits = model::classify_pooled(p, cfg, enc, model::NormMode::train, stats);
  auto cls = objectives::classification_loss(out.logits, batch.labels, w.tau);
  auto joint = objectives::joint_loss(rec, cls, w, last_good_step);
  out.total = joint.total;
  out.rec = joint.rec;
  out.cls = joint.cls;
  return out;
}

template <typename T>
PretrainOutputs<T> reconstruction_only_forward(const model::ParamBinding<T>& p, const model::ModelConfig& cfg,
                                               const data::Batch& batch, const objectives::LossWeights& w,
                                               bool norm_pix) {
  PretrainOutputs<T> out;
  auto enc = model::encode_visible(p, cfg, batch.visible.template cast<T>(), batch.plans);
  auto rec = rec_term(p, cfg, batch, enc, norm_pix, out.pred);
  out.total = diff::scale(rec, static_cast<T>(w.lambda_rec));
  out.rec = static_cast<double>(rec.value().item());
  return out;
}

#define SUPMAE_INSTANTIATE_STEPS(T)                                                                    \
  template Tensor<T> reconstruction_targets<T>(const data::Batch&, bool);                             \
  template PretrainOutputs<T> pretrain_forward<T>(const model::ParamBinding<T>&, const model::ModelConfig&, \
                                                  const data::Batch&, const objectives::LossWeights&, bool, \
                                                  model::BatchStats*, std::int64_t);                  \
  template PretrainOutputs<T> reconstruction_only_forward<T>(const model::ParamBinding<T>&,           \
                                                             const model::ModelConfig&, const data::Batch&, \
                                                             const objectives::LossWeights&, bool);

SUPMAE_INSTANTIATE_STEPS(float)
SUPMAE_INSTANTIATE_STEPS(double)
SUPMAE_INSTANTIATE_STEPS(long double)

#undef SUPMAE_INSTANTIATE_STEPS

}  // namespace supmae::train
