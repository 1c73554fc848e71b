#include "supmae/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "supmae/data/batch.hpp"
#include "supmae/data/mask.hpp"
#include "supmae/data/patch.hpp"
#include "supmae/error.hpp"
#include "supmae/rng.hpp"

namespace supmae::eval {

using diff::Tensor;

namespace {

void check_data(const data::Dataset& data, const model::ModelConfig& cfg) {
  if (data.empty()) fail(ErrorCategory::usage, "evaluation dataset is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& img = data.samples[i].image;
    if (img.height != cfg.image_h || img.width != cfg.image_w || img.channels != cfg.channels) {
      fail(ErrorCategory::geometry, "sample " + std::to_string(i) + " is " + std::to_string(img.height) + "x" +
                                        std::to_string(img.width) + "x" + std::to_string(img.channels) +
                                        ", model expects " + std::to_string(cfg.image_h) + "x" +
                                        std::to_string(cfg.image_w) + "x" + std::to_string(cfg.channels));
    }
  }
}

template <typename T>
void require_head(const model::ModelParams<T>& params, HeadKind head) {
  const char* needed = head == HeadKind::pretrain ? "head.fc0.weight"
                       : head == HeadKind::task   ? "task_head.weight"
                                                  : "probe.fc.weight";
  if (!params.contains(needed)) {
    fail(ErrorCategory::capability, std::string("parameters lack the requested head ('") + needed + "')");
  }
}

// Adds one batch of logits to the running tallies.
template <typename T>
void tally(const Tensor<T>& logits, const data::Dataset& data, std::size_t begin, double tau, EvalReport& r,
           std::vector<std::size_t>& hits, std::vector<std::size_t>& totals) {
  const std::size_t k = logits.last_dim();
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const T* z = logits.data().data() + i * k;
    const int label = data.samples[begin + i].label;
    const int pred = static_cast<int>(std::max_element(z, z + k) - z);
    double mx = static_cast<double>(z[0]) / tau;
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(z[j]) / tau);
    double se = 0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(static_cast<double>(z[j]) / tau - mx);
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      fail(ErrorCategory::data, "label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
    }
    r.loss += mx + std::log(se) - static_cast<double>(z[label]) / tau;
    r.predictions.push_back(pred);
    if (static_cast<std::size_t>(label) >= totals.size()) {
      totals.resize(label + 1, 0);
      hits.resize(label + 1, 0);
    }
    ++totals[label];
    if (pred == label) ++hits[label];
  }
}

void finalize(EvalReport& r, const std::vector<std::size_t>& hits, const std::vector<std::size_t>& totals,
              std::size_t num_classes) {
  std::size_t correct = 0;
  for (auto h : hits) correct += h;
  r.n_samples = r.predictions.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_samples);
  r.loss /= static_cast<double>(r.n_samples);
  r.per_class_accuracy.assign(std::max(num_classes, totals.size()), 0.0);
  for (std::size_t c = 0; c < totals.size(); ++c)
    if (totals[c]) r.per_class_accuracy[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
}

template <typename T>
EvalReport run(const model::ModelParams<T>& params, const model::ModelConfig& cfg, const data::Dataset& data,
               HeadKind head, std::size_t batch_size, double tau, const std::vector<data::MaskPlan>* plans,
               double keep_ratio) {
  check_data(data, cfg);
  require_head(params, head);
  batch_size = std::max<std::size_t>(batch_size, 1);
  EvalReport r;
  r.keep_ratio = keep_ratio;
  std::vector<std::size_t> hits, totals;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    std::vector<data::PatchGrid> grids;
    for (std::size_t i = begin; i < end; ++i) grids.push_back(data::patchify(data.samples[i].image, cfg.patch_size));
    diff::Graph<T> g(diff::GradMode::disabled);
    model::ParamBinding<T> p(g, params, [](const std::string&) { return false; });
    diff::Var<T> logits;
    if (plans) {
      std::vector<data::MaskPlan> bp(plans->begin() + static_cast<std::ptrdiff_t>(begin),
                                     plans->begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels(end - begin, 0);
      const auto batch = data::make_batch(grids, bp, labels);
      auto enc = model::encode_visible(p, cfg, batch.visible.template cast<T>(), batch.plans);
      logits = model::classify_pooled(p, cfg, enc, model::NormMode::eval);
    } else {
      auto enc = model::encode_full(p, cfg, data::stack_patches(grids).template cast<T>());
      switch (head) {
        case HeadKind::pretrain: logits = model::classify_pooled(p, cfg, enc, model::NormMode::eval); break;
        case HeadKind::task: logits = model::task_head_logits(p, model::pooled_feature(cfg, enc)); break;
        case HeadKind::probe:
          logits = model::probe_logits(p, model::pooled_feature(cfg, enc), model::NormMode::eval);
          break;
      }
    }
    tally(logits.value(), data, begin, tau, r, hits, totals);
  }
  finalize(r, hits, totals, static_cast<std::size_t>(std::max(data.num_classes, 0)));
  return r;
}

}  // namespace

template <typename T>
EvalReport evaluate_accuracy(const model::ModelParams<T>& params, const model::ModelConfig& cfg,
                             const data::Dataset& data, HeadKind head, std::size_t batch_size, double tau) {
  return run(params, cfg, data, head, batch_size, tau, nullptr, 1.0);
}

template <typename T>
EvalReport partial_patch_accuracy(const model::ModelParams<T>& params, const model::ModelConfig& cfg,
                                  const data::Dataset& data, double keep_ratio, std::uint64_t mask_seed,
                                  std::size_t batch_size) {
  if (!(keep_ratio > 0 && keep_ratio <= 1)) fail(ErrorCategory::config, "keep_ratio must be in (0, 1]");
  require_head(params, HeadKind::pretrain);
  const std::size_t n = cfg.num_patches();
  const auto kept = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(keep_ratio * static_cast<double>(n))));
  if (kept == n) return run(params, cfg, data, HeadKind::pretrain, batch_size, 1.0, nullptr, keep_ratio);
  const double ratio = static_cast<double>(n - kept) / static_cast<double>(n);
  std::vector<data::MaskPlan> plans;
  plans.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = Rng::derive(mask_seed, Stream::eval_mask, {i});
    plans.push_back(data::build_mask_plan(n, ratio, rng));
  }
  return run(params, cfg, data, HeadKind::pretrain, batch_size, 1.0, &plans, keep_ratio);
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0;
  for (auto x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (auto x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

template <typename T>
PartialReport partial_patch_inference(const model::ModelParams<T>& params, const model::ModelConfig& cfg,
                                      const data::Dataset& data, double keep_ratio,
                                      const std::vector<std::uint64_t>& mask_seeds, std::size_t batch_size) {
  if (mask_seeds.empty()) fail(ErrorCategory::usage, "partial_patch_inference needs at least one mask seed");
  PartialReport rep;
  rep.keep_ratio = keep_ratio;
  rep.seeds = mask_seeds;
  for (auto s : mask_seeds) rep.accuracies.push_back(partial_patch_accuracy(params, cfg, data, keep_ratio, s, batch_size).accuracy);
  std::tie(rep.mean, rep.std) = mean_std(rep.accuracies);
  return rep;
}

#define SUPMAE_INSTANTIATE_EVAL(T)                                                                          \
  template EvalReport evaluate_accuracy<T>(const model::ModelParams<T>&, const model::ModelConfig&,         \
                                           const data::Dataset&, HeadKind, std::size_t, double);            \
  template EvalReport partial_patch_accuracy<T>(const model::ModelParams<T>&, const model::ModelConfig&,    \
                                                const data::Dataset&, double, std::uint64_t, std::size_t);  \
  template PartialReport partial_patch_inference<T>(const model::ModelParams<T>&, const model::ModelConfig&, \
                                                    const data::Dataset&, double,                          \
                                                    const std::vector<std::uint64_t>&, std::size_t);

SUPMAE_INSTANTIATE_EVAL(float)
SUPMAE_INSTANTIATE_EVAL(double)

#undef SUPMAE_INSTANTIATE_EVAL

}  // namespace supmae::eval
