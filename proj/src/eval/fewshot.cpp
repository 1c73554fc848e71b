#include "supmae/eval/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "supmae/error.hpp"
#include "supmae/eval/evaluate.hpp"
#include "supmae/log.hpp"
#include "supmae/rng.hpp"
#include "supmae/train/trainer.hpp"

namespace supmae::eval {
namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.next() % i]);
}

train::TrainConfig downstream_config(train::Mode mode, std::size_t epochs, double lr, double wd, std::size_t n,
                                     std::uint64_t seed) {
  auto c = train::defaults_for(mode);
  c.epochs = epochs;
  c.warmup_epochs = epochs / 10;
  c.batch_size = std::min(c.batch_size, n);
  c.base_lr = lr * 256.0 / static_cast<double>(c.batch_size);
  c.adamw.weight_decay = wd;
  c.seed = seed;
  return c;
}

template <typename T>
double train_and_score(const model::ModelParams<T>& pretrained, const run::RunConfig& cfg, const data::Dataset& train_set,
                       const data::Dataset& eval_set, double lr, double wd, std::size_t epochs, std::uint64_t seed) {
  const auto mode = cfg.fewshot.mode;
  const auto tc = downstream_config(mode, epochs, lr, wd, train_set.size(), seed);
  if (mode == train::Mode::linprobe && tc.batch_size < 2) {
    fail(ErrorCategory::protocol, "few-shot probing needs at least 2 training samples");
  }
  train::TrainState<T> st;
  st.params = pretrained;
  const auto classes = static_cast<std::size_t>(train_set.num_classes);
  if (mode == train::Mode::linprobe) {
    train::prepare_linprobe(st.params, cfg.model, classes, seed);
  } else {
    train::prepare_finetune(st.params, cfg.model, classes, seed);
  }
  train::train(train_set, st, cfg.model, tc);
  const auto head = mode == train::Mode::linprobe ? HeadKind::probe : HeadKind::task;
  return evaluate_accuracy(st.params, cfg.model, eval_set, head, cfg.eval_batch_size).accuracy;
}

}  // namespace

std::vector<std::size_t> sample_shots(const data::Dataset& pool, std::size_t shots, std::uint64_t seed,
                                      std::size_t* clamped_to) {
  if (pool.num_classes <= 0) fail(ErrorCategory::protocol, "few-shot pool has no classes");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(pool.num_classes));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int label = pool.samples[i].label;
    if (label < 0 || label >= pool.num_classes) {
      fail(ErrorCategory::data, "label " + std::to_string(label) + " of sample " + std::to_string(i) + " out of range");
    }
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  std::size_t take = shots;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      fail(ErrorCategory::protocol, "class " + std::to_string(c) + " has no samples to draw shots from");
    }
    take = std::min(take, by_class[c].size());
  }
  if (take < shots) {
    log_warning("few-shot: " + std::to_string(shots) + " shots requested, smallest class has " + std::to_string(take) +
                "; clamped");
  }
  if (clamped_to) *clamped_to = take;
  Rng rng = Rng::derive(seed, Stream::fewshot, {shots});
  std::vector<std::size_t> out;
  for (auto& members : by_class) {
    shuffle(members, rng);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(const std::vector<std::size_t>& indices,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> order = indices;
  Rng rng = Rng::derive(seed, Stream::fewshot, {0x5A11});
  shuffle(order, rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(order.size())));
  if (order.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(tr.begin(), tr.end());
  std::sort(val.begin(), val.end());
  return {tr, val};
}

template <typename T>
FewshotReport fewshot_protocol(const model::ModelParams<T>& pretrained, const run::RunConfig& cfg,
                               const data::Dataset& pool, const data::Dataset& test) {
  const auto& fs = cfg.fewshot;
  if (fs.mode == train::Mode::pretrain) fail(ErrorCategory::usage, "few-shot mode must be linprobe or finetune");
  if (fs.lrs.empty() || fs.wds.empty()) fail(ErrorCategory::usage, "few-shot grid is empty");
  if (test.empty()) fail(ErrorCategory::usage, "few-shot test set is empty");
  FewshotReport rep;
  rep.mode = fs.mode;
  rep.fingerprint = run::fingerprint(cfg);
  const bool search = fs.lrs.size() * fs.wds.size() > 1;
  std::vector<double> accs;
  for (std::size_t s = 0; s < fs.seeds; ++s) {
    const std::uint64_t seed = cfg.train.seed + s;
    std::size_t take = 0;
    const auto picked = sample_shots(pool, fs.shots, seed, &take);
    rep.shots = take;
    FewshotTrial trial;
    trial.seed = seed;
    trial.lr = fs.lrs.front();
    trial.weight_decay = fs.wds.front();
    trial.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (search) {
      auto [tr, val] = split_train_val(picked, seed);
      if (val.empty() || tr.empty()) {
        fail(ErrorCategory::protocol, "too few shots for a train/validation split");
      }
      const auto train_set = data::subset(pool, tr);
      const auto val_set = data::subset(pool, val);
      double best = -1;
      for (double lr : fs.lrs)
        for (double wd : fs.wds) {
          const double acc = train_and_score(pretrained, cfg, train_set, val_set, lr, wd, fs.search_epochs, seed);
          if (acc > best) {
            best = acc;
            trial.lr = lr;
            trial.weight_decay = wd;
          }
        }
      trial.val_accuracy = best;
    }
    const auto all = data::subset(pool, picked);
    trial.train_samples = all.size();
    trial.test_accuracy =
        train_and_score(pretrained, cfg, all, test, trial.lr, trial.weight_decay, fs.final_epochs, seed);
    accs.push_back(trial.test_accuracy);
    rep.trials.push_back(trial);
  }
  std::tie(rep.mean, rep.std) = mean_std(accs);
  return rep;
}

template FewshotReport fewshot_protocol<float>(const model::ModelParams<float>&, const run::RunConfig&,
                                               const data::Dataset&, const data::Dataset&);
template FewshotReport fewshot_protocol<double>(const model::ModelParams<double>&, const run::RunConfig&,
                                                const data::Dataset&, const data::Dataset&);

}  // namespace supmae::eval
