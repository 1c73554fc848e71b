#include "supmae/eval/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "supmae/error.hpp"
#include "supmae/eval/evaluate.hpp"
#include "supmae/train/trainer.hpp"

namespace supmae::eval {
namespace {

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes{"objectives",    "pooling_mode",  "augmentation",
                                             "cls_ratio",     "decoder_depth", "mlp_layers"};
  return axes;
}

std::vector<std::string> default_sweep(const std::string& axis) {
  if (axis == "objectives") return {"rec", "cls", "rec+cls"};
  if (axis == "pooling_mode") return {"class_token", "global_pool"};
  if (axis == "augmentation") return {"randcrop", "randcrop+cjit"};
  if (axis == "cls_ratio") return {"0.02", "0.01", "0.005", "0.002"};
  if (axis == "decoder_depth") return {"1", "4", "8"};
  if (axis == "mlp_layers") return {"1", "2", "3"};
  fail(ErrorCategory::usage, "unknown ablation axis '" + axis +
                                 "' (objectives, pooling_mode, augmentation, cls_ratio, decoder_depth, mlp_layers)");
}

run::RunConfig apply_axis(const run::RunConfig& base, const std::string& axis, const std::string& value) {
  default_sweep(axis);
  run::RunConfig c = base;
  const std::string origin = "ablation " + axis;
  if (axis == "objectives") {
    if (value == "rec") {
      c.train.loss.lambda_cls = 0.0;
    } else if (value == "cls") {
      c.train.loss.lambda_rec = 0.0;
    } else if (value != "rec+cls") {
      fail(ErrorCategory::config, origin + ": value must be rec, cls or rec+cls, got '" + value + "'");
    }
  } else if (axis == "augmentation") {
    auto& a = c.train.augment;
    a.random_resized_crop = value != "none";
    a.color_jitter = value == "randcrop+cjit";
    a.horizontal_flip = value == "randcrop+flip";
    if (value != "none" && value != "randcrop" && value != "randcrop+cjit" && value != "randcrop+flip") {
      fail(ErrorCategory::config, origin + ": value must be none, randcrop, randcrop+cjit or randcrop+flip, got '" +
                                      value + "'");
    }
  } else if (axis == "cls_ratio") {
    run::apply_assignment(c, "lambda_cls=" + value, origin);
  } else if (axis == "mlp_layers") {
    run::apply_assignment(c, "mlp_layers=" + value, origin);
  } else {
    run::apply_assignment(c, axis + "=" + value, origin);
  }
  run::validate(c);
  return c;
}

template <typename T>
std::vector<AblationRow> ablation_grid(const run::RunConfig& cfg, const data::Dataset& train_set,
                                       const data::Dataset& test, const RowSink& on_row) {
  auto values = split_values(cfg.ablate_values);
  if (values.empty()) values = default_sweep(cfg.ablate_axis);
  std::vector<run::RunConfig> configs;
  for (const auto& v : values) configs.push_back(apply_axis(cfg, cfg.ablate_axis, v));
  const auto classes = static_cast<std::size_t>(std::max(train_set.num_classes, 1));
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& rc = configs[i];
    for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
      AblationRow row;
      row.axis = cfg.ablate_axis;
      row.value = values[i];
      row.seed = rc.train.seed + s;
      row.fingerprint = run::fingerprint(rc);

      auto pc = rc.train;
      pc.mode = train::Mode::pretrain;
      pc.seed = row.seed;
      train::TrainState<T> pre;
      pre.params = model::init_params<T>(rc.model, row.seed);
      const auto metrics = train::train(train_set, pre, rc.model, pc);
      row.pretrain_loss = metrics.empty() ? 0.0 : metrics.back().loss;

      auto lc = train::defaults_for(train::Mode::linprobe);
      lc.epochs = rc.probe_epochs;
      lc.warmup_epochs = std::min(lc.warmup_epochs, lc.epochs);
      lc.base_lr = rc.probe_lr;
      lc.batch_size = rc.train.batch_size;
      lc.seed = row.seed;
      train::TrainState<T> probe;
      probe.params = pre.params;
      train::prepare_linprobe(probe.params, rc.model, classes, row.seed);
      train::train(train_set, probe, rc.model, lc);
      row.linprobe_accuracy =
          evaluate_accuracy(probe.params, rc.model, test, HeadKind::probe, rc.eval_batch_size).accuracy;

      auto fc = train::defaults_for(train::Mode::finetune);
      fc.epochs = rc.finetune_epochs;
      fc.warmup_epochs = std::min(fc.warmup_epochs, fc.epochs);
      fc.base_lr = rc.finetune_lr;
      fc.batch_size = rc.train.batch_size;
      fc.seed = row.seed;
      train::TrainState<T> ft;
      ft.params = pre.params;
      train::prepare_finetune(ft.params, rc.model, classes, row.seed);
      train::train(train_set, ft, rc.model, fc);
      row.finetune_accuracy = evaluate_accuracy(ft.params, rc.model, test, HeadKind::task, rc.eval_batch_size).accuracy;

      if (on_row) on_row(row);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string ablation_tsv(const std::vector<AblationRow>& rows) {
  std::string out = "axis\tvalue\tseeds\tft\tlin\tfingerprint\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AblationRow*>> groups;
  for (const auto& r : rows) {
    if (!groups.count(r.value)) order.push_back(r.value);
    groups[r.value].push_back(&r);
  }
  for (const auto& v : order) {
    const auto& g = groups[v];
    double ft = 0, lin = 0;
    for (const auto* r : g) {
      ft += r->finetune_accuracy;
      lin += r->linprobe_accuracy;
    }
    ft /= static_cast<double>(g.size());
    lin /= static_cast<double>(g.size());
    out += g.front()->axis + "\t" + v + "\t" + std::to_string(g.size()) + "\t" + fmt(ft) + "\t" + fmt(lin) + "\t" +
           run::fingerprint_hex(g.front()->fingerprint) + "\n";
  }
  return out;
}

std::string ablation_jsonl(const std::vector<AblationRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["kind"] = "ablation";
    j["axis"] = r.axis;
    j["value"] = r.value;
    j["seed"] = r.seed;
    j["pretrain_loss"] = r.pretrain_loss;
    j["ft"] = r.finetune_accuracy;
    j["lin"] = r.linprobe_accuracy;
    j["fingerprint"] = run::fingerprint_hex(r.fingerprint);
    out += j.dump() + "\n";
  }
  return out;
}

template std::vector<AblationRow> ablation_grid<float>(const run::RunConfig&, const data::Dataset&,
                                                       const data::Dataset&, const RowSink&);
template std::vector<AblationRow> ablation_grid<double>(const run::RunConfig&, const data::Dataset&,
                                                        const data::Dataset&, const RowSink&);

}  // namespace supmae::eval
