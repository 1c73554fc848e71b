#include "supmae/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <string>

#include "supmae/data/augment.hpp"
#include "supmae/data/batch.hpp"
#include "supmae/data/mask.hpp"
#include "supmae/diff/ops.hpp"
#include "supmae/error.hpp"
#include "supmae/objectives/losses.hpp"
#include "supmae/rng.hpp"
#include "supmae/train/schedule.hpp"
#include "supmae/train/steps.hpp"

namespace supmae::train {

using diff::Tensor;
using diff::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t require_batches(const data::Dataset& data, const TrainConfig& cfg) {
  const std::size_t bpe = batches_per_epoch(data.size(), cfg.batch_size);
  if (bpe == 0) {
    fail(ErrorCategory::config, "dataset of " + std::to_string(data.size()) + " samples is smaller than batch_size " +
                                    std::to_string(cfg.batch_size));
  }
  return bpe;
}

template <typename T>
std::size_t count_correct(const Tensor<T>& logits, const std::vector<int>& labels) {
  const std::size_t k = logits.last_dim();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const T* row = logits.data().data() + i * k;
    const auto best = static_cast<int>(std::max_element(row, row + k) - row);
    if (best == labels[i]) ++correct;
  }
  return correct;
}

[[noreturn]] void rethrow_numeric(const Error& e, const TrainConfig& cfg, std::uint64_t epoch, std::size_t batch,
                                  std::uint64_t step) {
  fail(ErrorCategory::numeric, std::string(e.what()) + " [mode " + mode_name(cfg.mode) + ", epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batch) + ", last good step " +
                                   std::to_string(step) + "; rng state: seed " + std::to_string(cfg.seed) +
                                   ", streams keyed by (epoch " + std::to_string(epoch) + ", sample index)]");
}

struct MicroBatch {
  std::vector<data::PatchGrid> grids;
  std::vector<data::MaskPlan> plans;
  std::vector<int> labels;
};

MicroBatch gather(const data::Dataset& data, const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t count, const model::ModelConfig& mcfg, const TrainConfig& cfg, std::uint64_t epoch,
                  bool masked) {
  MicroBatch mb;
  for (std::size_t j = begin; j < begin + count; ++j) {
    const std::size_t idx = order[j];
    mb.grids.push_back(prepare_sample(data.samples[idx], mcfg, cfg.augment, cfg.seed, epoch, idx));
    mb.plans.push_back(masked ? data::plan_for(cfg.seed, epoch, idx, mcfg.num_patches(), cfg.mask_ratio)
                              : data::full_visibility_plan(mcfg.num_patches()));
    mb.labels.push_back(data.samples[idx].label);
  }
  return mb;
}

void finish(EpochMetrics& m, std::size_t correct, Clock::time_point t0) {
  const double nb = static_cast<double>(std::max<std::size_t>(m.batches, 1));
  m.loss /= nb;
  m.rec /= nb;
  m.cls /= nb;
  m.train_accuracy = m.samples ? static_cast<double>(correct) / static_cast<double>(m.samples) : 0.0;
  m.seconds = seconds_since(t0);
}

template <typename T>
EpochMetrics pretrain_like_epoch(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                                 const TrainConfig& cfg, const BatchSink& sink, bool with_head) {
  cfg.validate(mcfg);
  const auto t0 = Clock::now();
  const std::size_t bpe = require_batches(data, cfg);
  const std::uint64_t epoch = state.epoch;
  const auto order = epoch_order(cfg.seed, epoch, data.size());
  const std::size_t micro = cfg.batch_size / cfg.accum_steps;
  const T micro_scale = static_cast<T>(1.0 / static_cast<double>(cfg.accum_steps));
  auto& params = state.params;
  auto trainable = [&params, with_head](const std::string& name) {
    return params.kind(name) == model::ParamKind::trainable && (with_head || !model::is_pretrain_head_param(name));
  };
  EpochMetrics m;
  m.mode = Mode::pretrain;
  m.epoch = epoch;
  std::size_t correct = 0;
  for (std::size_t bi = 0; bi < bpe; ++bi) {
    const double lr = scheduled_lr(cfg, bpe, state.step);
    diff::Gradients<T> grads;
    double loss = 0, rec = 0, cls = 0;
    try {
      for (std::size_t mi = 0; mi < cfg.accum_steps; ++mi) {
        auto mb = gather(data, order, bi * cfg.batch_size + mi * micro, micro, mcfg, cfg, epoch, true);
        const auto batch = data::make_batch(mb.grids, mb.plans, mb.labels);
        diff::Graph<T> g;
        model::ParamBinding<T> p(g, params, trainable);
        model::BatchStats stats;
        auto out = with_head ? pretrain_forward(p, mcfg, batch, cfg.loss, cfg.norm_pix, &stats,
                                                static_cast<std::int64_t>(state.step))
                             : reconstruction_only_forward(p, mcfg, batch, cfg.loss, cfg.norm_pix);
        auto total = cfg.accum_steps > 1 ? diff::scale(out.total, micro_scale) : out.total;
        grads.accumulate(g.backward(total));
        if (with_head) {
          model::update_running_stats(params, stats, micro);
          correct += count_correct(out.logits.value(), batch.labels);
        }
        loss += static_cast<double>(out.total.value().item());
        rec += out.rec;
        cls += out.cls;
      }
      optimizer_step(params, grads, state.opt, lr, cfg.adamw);
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::numeric) throw;
      rethrow_numeric(e, cfg, epoch, bi, state.step);
    }
    ++state.step;
    const double k = static_cast<double>(cfg.accum_steps);
    BatchRecord r{Mode::pretrain, epoch, bi, state.step, lr, loss / k, rec / k, cls / k};
    m.batch_losses.push_back(r.loss);
    m.loss += r.loss;
    m.rec += r.rec;
    m.cls += r.cls;
    m.lr = lr;
    m.samples += cfg.batch_size;
    ++m.batches;
    if (sink) sink(r);
  }
  finish(m, correct, t0);
  if (!with_head) m.train_accuracy = 0;
  state.epoch += 1;
  return m;
}

template <typename T>
void require_encoder(const model::ModelParams<T>& params, const model::ModelConfig& mcfg) {
  const auto reference = model::init_params<T>(mcfg, 0);
  for (const auto& e : reference.entries()) {
    if (!model::is_encoder_param(e.name)) continue;
    if (!params.contains(e.name)) fail(ErrorCategory::load, "checkpoint lacks encoder tensor '" + e.name + "'");
    if (params.get(e.name).shape() != e.value.shape()) {
      fail(ErrorCategory::load, "encoder tensor '" + e.name + "' has shape " +
                                    diff::shape_str(params.get(e.name).shape()) + ", config expects " +
                                    diff::shape_str(e.value.shape()));
    }
  }
}

}  // namespace

std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size) {
  return batch_size == 0 ? 0 : samples / batch_size;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::derive(seed, Stream::shuffle, {epoch});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

data::PatchGrid prepare_sample(const data::LabeledImage& sample, const model::ModelConfig& cfg,
                               const AugmentConfig& aug, std::uint64_t seed, std::uint64_t epoch,
                               std::uint64_t index) {
  const auto& img = sample.image;
  if (img.channels != cfg.channels) {
    fail(ErrorCategory::geometry, "image has " + std::to_string(img.channels) + " channels, model expects " +
                                      std::to_string(cfg.channels));
  }
  if (!aug.any()) {
    if (img.height != cfg.image_h || img.width != cfg.image_w) {
      fail(ErrorCategory::geometry, "image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                        ", model expects " + std::to_string(cfg.image_h) + "x" +
                                        std::to_string(cfg.image_w));
    }
    return data::patchify(img, cfg.patch_size);
  }
  Rng rng = Rng::derive(seed, Stream::augment, {epoch, index});
  data::Image out = img;
  if (aug.random_resized_crop) {
    out = data::random_resized_crop(sample, cfg.image_h, cfg.image_w, aug.crop, rng).image;
  } else if (img.height != cfg.image_h || img.width != cfg.image_w) {
    out = data::crop_resize(img, {0, 0, img.height, img.width}, cfg.image_h, cfg.image_w);
  }
  if (aug.horizontal_flip && rng.bernoulli(0.5)) out = data::horizontal_flip(out);
  return data::patchify(out, cfg.patch_size);
}

double scheduled_lr(const TrainConfig& cfg, std::size_t steps_per_epoch, std::uint64_t step) {
  const std::size_t total = cfg.epochs * steps_per_epoch;
  const std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  const double peak = cfg.peak_lr();
  if (warmup >= total) return peak * static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(warmup, 1));
  return lr_at(std::min<std::size_t>(step, total - 1), total, warmup, peak, cfg.min_lr);
}

template <typename T>
EpochMetrics pretrain_epoch(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                            const TrainConfig& cfg, const BatchSink& sink) {
  return pretrain_like_epoch(data, state, mcfg, cfg, sink, true);
}

template <typename T>
EpochMetrics reconstruction_only_epoch(const data::Dataset& data, TrainState<T>& state,
                                       const model::ModelConfig& mcfg, const TrainConfig& cfg,
                                       const BatchSink& sink) {
  return pretrain_like_epoch(data, state, mcfg, cfg, sink, false);
}

template <typename T>
void prepare_finetune(model::ModelParams<T>& params, const model::ModelConfig& mcfg, std::size_t num_classes,
                      std::uint64_t seed) {
  require_encoder(params, mcfg);
  model::strip_to_encoder(params);
  model::add_task_head(params, mcfg, num_classes, seed);
}

template <typename T>
EpochMetrics finetune_epoch(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                            const TrainConfig& cfg, const BatchSink& sink) {
  cfg.validate(mcfg);
  const auto t0 = Clock::now();
  const std::size_t bpe = require_batches(data, cfg);
  const std::uint64_t epoch = state.epoch;
  const auto order = epoch_order(cfg.seed, epoch, data.size());
  const std::size_t micro = cfg.batch_size / cfg.accum_steps;
  const T micro_scale = static_cast<T>(1.0 / static_cast<double>(cfg.accum_steps));
  auto& params = state.params;
  const auto mult = layerwise_multipliers(mcfg.depth, cfg.layerwise_decay);
  const LrScale scale = [&mult, &mcfg](const std::string& name) { return mult[layer_group(name, mcfg.depth)]; };
  auto trainable = [&params](const std::string& name) { return params.kind(name) == model::ParamKind::trainable; };
  EpochMetrics m;
  m.mode = Mode::finetune;
  m.epoch = epoch;
  std::size_t correct = 0;
  for (std::size_t bi = 0; bi < bpe; ++bi) {
    const double lr = scheduled_lr(cfg, bpe, state.step);
    diff::Gradients<T> grads;
    double loss = 0;
    try {
      for (std::size_t mi = 0; mi < cfg.accum_steps; ++mi) {
        auto mb = gather(data, order, bi * cfg.batch_size + mi * micro, micro, mcfg, cfg, epoch, false);
        diff::Graph<T> g;
        model::ParamBinding<T> p(g, params, trainable);
        auto enc = model::encode_full(p, mcfg, data::stack_patches(mb.grids).template cast<T>());
        auto logits = model::task_head_logits(p, model::pooled_feature(mcfg, enc));
        auto ce = objectives::classification_loss(logits, mb.labels, 1.0, cfg.label_smoothing);
        grads.accumulate(g.backward(cfg.accum_steps > 1 ? diff::scale(ce, micro_scale) : ce));
        correct += count_correct(logits.value(), mb.labels);
        loss += static_cast<double>(ce.value().item());
      }
      optimizer_step(params, grads, state.opt, lr, cfg.adamw, scale);
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::numeric) throw;
      rethrow_numeric(e, cfg, epoch, bi, state.step);
    }
    ++state.step;
    BatchRecord r{Mode::finetune, epoch, bi, state.step, lr, loss / static_cast<double>(cfg.accum_steps), 0, 0};
    r.cls = r.loss;
    m.batch_losses.push_back(r.loss);
    m.loss += r.loss;
    m.cls += r.loss;
    m.lr = lr;
    m.samples += cfg.batch_size;
    ++m.batches;
    if (sink) sink(r);
  }
  finish(m, correct, t0);
  state.epoch += 1;
  return m;
}

template <typename T>
void prepare_linprobe(model::ModelParams<T>& params, const model::ModelConfig& mcfg, std::size_t num_classes,
                      std::uint64_t seed) {
  require_encoder(params, mcfg);
  model::strip_to_encoder(params);
  model::add_probe_head(params, mcfg, num_classes, seed);
}

template <typename T>
Tensor<T> pooled_features(const model::ModelParams<T>& params, const model::ModelConfig& mcfg,
                          const data::Dataset& data, std::size_t batch_size) {
  if (data.empty()) fail(ErrorCategory::data, "no samples to featurize");
  batch_size = std::max<std::size_t>(batch_size, 1);
  Tensor<T> out(diff::Shape{data.size(), mcfg.embed_dim});
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    std::vector<data::PatchGrid> grids;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& img = data.samples[i].image;
      if (img.height != mcfg.image_h || img.width != mcfg.image_w || img.channels != mcfg.channels) {
        fail(ErrorCategory::geometry, "sample " + std::to_string(i) + " does not match the model geometry");
      }
      grids.push_back(data::patchify(img, mcfg.patch_size));
    }
    diff::Graph<T> g(diff::GradMode::disabled);
    model::ParamBinding<T> p(g, params, [](const std::string&) { return false; });
    auto enc = model::encode_full(p, mcfg, data::stack_patches(grids).template cast<T>());
    const auto& f = model::pooled_feature(mcfg, enc).value();
    std::copy(f.data().begin(), f.data().end(), out.data().begin() + begin * mcfg.embed_dim);
  }
  return out;
}

template <typename T>
EpochMetrics linprobe_epoch(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                            const TrainConfig& cfg, ProbeCache<T>* cache, const BatchSink& sink) {
  cfg.validate(mcfg);
  const auto t0 = Clock::now();
  const std::size_t bpe = require_batches(data, cfg);
  const std::uint64_t epoch = state.epoch;
  const auto order = epoch_order(cfg.seed, epoch, data.size());
  auto& params = state.params;
  const std::uint64_t before = params.checksum(model::is_encoder_param);
  const std::size_t d = mcfg.embed_dim;

  std::optional<Tensor<T>> local;
  const Tensor<T>* features = nullptr;
  if (!cfg.augment.any()) {
    if (cache && cache->features && cache->encoder_checksum == before) {
      features = &*cache->features;
    } else {
      local = pooled_features(params, mcfg, data);
      if (cache) {
        cache->features = std::move(local);
        cache->encoder_checksum = before;
        features = &*cache->features;
      } else {
        features = &*local;
      }
    }
  }
  auto trainable = [](const std::string& name) { return name.rfind("probe.", 0) == 0; };
  EpochMetrics m;
  m.mode = Mode::linprobe;
  m.epoch = epoch;
  std::size_t correct = 0;
  for (std::size_t bi = 0; bi < bpe; ++bi) {
    const double lr = scheduled_lr(cfg, bpe, state.step);
    std::vector<int> labels;
    Tensor<T> feat(diff::Shape{cfg.batch_size, d});
    if (features) {
      for (std::size_t j = 0; j < cfg.batch_size; ++j) {
        const std::size_t idx = order[bi * cfg.batch_size + j];
        std::copy_n(features->data().begin() + idx * d, d, feat.data().begin() + j * d);
        labels.push_back(data.samples[idx].label);
      }
    } else {
      auto mb = gather(data, order, bi * cfg.batch_size, cfg.batch_size, mcfg, cfg, epoch, false);
      diff::Graph<T> fg(diff::GradMode::disabled);
      model::ParamBinding<T> fp(fg, params, [](const std::string&) { return false; });
      auto enc = model::encode_full(fp, mcfg, data::stack_patches(mb.grids).template cast<T>());
      feat = model::pooled_feature(mcfg, enc).value();
      labels = mb.labels;
    }
    double loss = 0;
    try {
      diff::Graph<T> g;
      model::ParamBinding<T> p(g, params, trainable);
      model::BatchStats stats;
      auto logits = model::probe_logits(p, g.constant(std::move(feat)), model::NormMode::train, &stats);
      auto ce = objectives::classification_loss(logits, labels, 1.0, cfg.label_smoothing);
      auto grads = g.backward(ce);
      optimizer_step(params, grads, state.opt, lr, cfg.adamw);
      model::update_running_stats(params, stats, cfg.batch_size);
      correct += count_correct(logits.value(), labels);
      loss = static_cast<double>(ce.value().item());
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::numeric) throw;
      rethrow_numeric(e, cfg, epoch, bi, state.step);
    }
    ++state.step;
    BatchRecord r{Mode::linprobe, epoch, bi, state.step, lr, loss, 0, loss};
    m.batch_losses.push_back(loss);
    m.loss += loss;
    m.cls += loss;
    m.lr = lr;
    m.samples += cfg.batch_size;
    ++m.batches;
    if (sink) sink(r);
  }
  if (params.checksum(model::is_encoder_param) != before) {
    fail(ErrorCategory::invariant, "encoder parameters changed during linear probing");
  }
  finish(m, correct, t0);
  state.epoch += 1;
  return m;
}

template <typename T>
std::vector<EpochMetrics> train(const data::Dataset& data, TrainState<T>& state, const model::ModelConfig& mcfg,
                                const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch,
                                const BatchSink& sink) {
  std::vector<EpochMetrics> out;
  ProbeCache<T> cache;
  while (state.epoch < cfg.epochs) {
    EpochMetrics m;
    switch (cfg.mode) {
      case Mode::pretrain: m = pretrain_epoch(data, state, mcfg, cfg, sink); break;
      case Mode::finetune: m = finetune_epoch(data, state, mcfg, cfg, sink); break;
      case Mode::linprobe: m = linprobe_epoch(data, state, mcfg, cfg, &cache, sink); break;
    }
    if (on_epoch) on_epoch(m);
    out.push_back(std::move(m));
  }
  return out;
}

#define SUPMAE_INSTANTIATE_TRAINER(T)                                                                       \
  template EpochMetrics pretrain_epoch<T>(const data::Dataset&, TrainState<T>&, const model::ModelConfig&,  \
                                          const TrainConfig&, const BatchSink&);                            \
  template EpochMetrics reconstruction_only_epoch<T>(const data::Dataset&, TrainState<T>&,                 \
                                                     const model::ModelConfig&, const TrainConfig&,        \
                                                     const BatchSink&);                                    \
  template void prepare_finetune<T>(model::ModelParams<T>&, const model::ModelConfig&, std::size_t,         \
                                    std::uint64_t);                                                         \
  template EpochMetrics finetune_epoch<T>(const data::Dataset&, TrainState<T>&, const model::ModelConfig&,  \
                                          const TrainConfig&, const BatchSink&);                            \
  template void prepare_linprobe<T>(model::ModelParams<T>&, const model::ModelConfig&, std::size_t,         \
                                    std::uint64_t);                                                         \
  template Tensor<T> pooled_features<T>(const model::ModelParams<T>&, const model::ModelConfig&,            \
                                        const data::Dataset&, std::size_t);                                 \
  template EpochMetrics linprobe_epoch<T>(const data::Dataset&, TrainState<T>&, const model::ModelConfig&,  \
                                          const TrainConfig&, ProbeCache<T>*, const BatchSink&);            \
  template std::vector<EpochMetrics> train<T>(const data::Dataset&, TrainState<T>&, const model::ModelConfig&, \
                                              const TrainConfig&, const std::function<void(const EpochMetrics&)>&, \
                                              const BatchSink&);

SUPMAE_INSTANTIATE_TRAINER(float)
SUPMAE_INSTANTIATE_TRAINER(double)

#undef SUPMAE_INSTANTIATE_TRAINER

}  // namespace supmae::train
