#include <doctest.h>

#include <cmath>
#include <set>

#include "expect_error.hpp"
#include "supmae/data/toyset.hpp"
#include "supmae/eval/ablation.hpp"
#include "supmae/eval/evaluate.hpp"
#include "supmae/eval/fewshot.hpp"
#include "supmae/eval/report.hpp"
#include "supmae/model/vit.hpp"
#include "supmae/run/config_file.hpp"
#include "supmae/train/trainer.hpp"

using namespace supmae;
using namespace supmae::eval;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.image_h = c.image_w = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 1;
  c.heads = 2;
  c.decoder_dim = 8;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  c.num_classes = 10;
  return c;
}

data::ToySplit toy(std::size_t train, std::size_t test, std::uint64_t seed = 1) {
  return data::make_toy_dataset({.train = train, .test = test, .size = 16, .seed = seed});
}

run::RunConfig tiny_run() {
  auto rc = run::default_config(train::Mode::pretrain);
  rc.model = tiny_model();
  rc.train.epochs = 1;
  rc.train.warmup_epochs = 0;
  rc.train.batch_size = 16;
  rc.train.base_lr = 1e-2;
  rc.probe_epochs = 1;
  rc.finetune_epochs = 1;
  rc.data.toy = {.train = 32, .test = 20, .size = 16, .seed = 1};
  return rc;
}

}  // namespace

TEST_CASE("hardwired head predicts class 0 and scores one in ten") {
  auto m = tiny_model();
  auto params = model::init_params<float>(m, 1);
  train::prepare_finetune(params, m, 10, 1);
  auto& w = params.get_mut("task_head.weight");
  for (auto& v : w.data()) v = 0.0f;
  params.get_mut("task_head.bias")[0] = 1.0f;
  auto data = toy(20, 50).test;
  auto r = evaluate_accuracy(params, m, data, HeadKind::task);
  CHECK(r.accuracy == doctest::Approx(0.1));
  CHECK(r.n_samples == 50);
  CHECK(r.per_class_accuracy[0] == 1.0);
  CHECK(r.per_class_accuracy[3] == 0.0);

  // One sample whose label is the hardwired class.
  data::Dataset one;
  one.num_classes = 10;
  one.samples.push_back(data.samples[0]);
  one.samples[0].label = 0;
  CHECK(evaluate_accuracy(params, m, one, HeadKind::task).accuracy == 1.0);

  EXPECT_ERROR(evaluate_accuracy(params, m, data::Dataset{}, HeadKind::task), ErrorCategory::usage);
}

TEST_CASE("accuracy matches a recount of dumped predictions and ignores batch size") {
  auto m = tiny_model();
  auto params = model::init_params<float>(m, 2);
  train::prepare_finetune(params, m, 10, 2);
  auto data = toy(20, 70).test;
  auto a = evaluate_accuracy(params, m, data, HeadKind::task, 1);
  auto b = evaluate_accuracy(params, m, data, HeadKind::task, 64);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.loss == b.loss);
  CHECK(a.predictions == b.predictions);
  CHECK(a.per_class_accuracy == b.per_class_accuracy);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += a.predictions[i] == data.samples[i].label;
  CHECK(a.accuracy == static_cast<double>(correct) / static_cast<double>(data.size()));
}

TEST_CASE("partial-patch inference") {
  auto m = tiny_model();
  auto params = model::init_params<float>(m, 3);
  auto data = toy(20, 200).test;
  auto full = evaluate_accuracy(params, m, data, HeadKind::pretrain);
  auto k1 = partial_patch_accuracy(params, m, data, 1.0, 11);
  CHECK(k1.accuracy == full.accuracy);
  CHECK(k1.predictions == full.predictions);
  CHECK(partial_patch_accuracy(params, m, data, 1.0, 12).predictions == k1.predictions);

  auto p1 = partial_patch_accuracy(params, m, data, 0.25, 1);
  auto p2 = partial_patch_accuracy(params, m, data, 0.25, 2);
  CHECK(p1.predictions != p2.predictions);
  CHECK(p1.keep_ratio == 0.25);

  auto rep = partial_patch_inference(params, m, data, 0.25, {0, 1, 2, 3, 4});
  CHECK(rep.accuracies.size() == 5);
  auto [mean, sd] = mean_std(rep.accuracies);
  CHECK(rep.mean == mean);
  CHECK(rep.std == sd);
  auto json = partial_json(rep, 0xabc);
  CHECK(json.find("\"fingerprint\"") != std::string::npos);

  auto enc = params;
  model::strip_to_encoder(enc);
  EXPECT_ERROR(partial_patch_accuracy(enc, m, data, 0.25, 1), ErrorCategory::capability);
  EXPECT_ERROR(partial_patch_accuracy(params, m, data, 0.0, 1), ErrorCategory::config);
}

TEST_CASE("mean_std") {
  auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK(mean_std({0.4}).second == 0.0);
}

TEST_CASE("few-shot sampling") {
  auto pool = toy(100, 10).train;
  auto a = sample_shots(pool, 3, 7);
  CHECK(a.size() == 30);
  CHECK(a == sample_shots(pool, 3, 7));
  CHECK(a != sample_shots(pool, 3, 8));
  std::vector<int> per(10, 0);
  for (auto i : a) ++per[pool.samples[i].label];
  for (int c : per) CHECK(c == 3);

  std::size_t clamped = 0;
  auto big = sample_shots(pool, 50, 7, &clamped);
  CHECK(clamped == 10);
  CHECK(big.size() == 100);

  auto missing = pool;
  missing.samples.erase(std::remove_if(missing.samples.begin(), missing.samples.end(),
                                       [](const data::LabeledImage& s) { return s.label == 4; }),
                        missing.samples.end());
  auto msg = EXPECT_ERROR(sample_shots(missing, 2, 1), ErrorCategory::protocol);
  CHECK(msg.find("4") != std::string::npos);

  auto [tr, va] = split_train_val(a, 3);
  CHECK(tr.size() == 24);
  CHECK(va.size() == 6);
  std::set<std::size_t> all(tr.begin(), tr.end());
  all.insert(va.begin(), va.end());
  CHECK(all == std::set<std::size_t>(a.begin(), a.end()));
}

TEST_CASE("few-shot protocol: one-point grid skips the search") {
  auto rc = tiny_run();
  rc.fewshot.shots = 2;
  rc.fewshot.lrs = {1e-3};
  rc.fewshot.wds = {0.0};
  rc.fewshot.seeds = 2;
  rc.fewshot.final_epochs = 2;
  auto split = toy(60, 30);
  auto params = model::init_params<float>(rc.model, 1);
  auto rep = fewshot_protocol(params, rc, split.train, split.test);
  REQUIRE(rep.trials.size() == 2);
  for (const auto& t : rep.trials) {
    CHECK(std::isnan(t.val_accuracy));
    CHECK(t.train_samples == 20);
    CHECK(t.test_accuracy >= 0.0);
    CHECK(t.test_accuracy <= 1.0);
  }
  CHECK(rep.fingerprint == run::fingerprint(rc));

  rc.fewshot.lrs = {1e-3, 3e-3};
  rc.fewshot.seeds = 1;
  rc.fewshot.search_epochs = 1;
  rc.fewshot.mode = train::Mode::finetune;
  auto searched = fewshot_protocol(params, rc, split.train, split.test);
  CHECK_FALSE(std::isnan(searched.trials[0].val_accuracy));
  CHECK(fewshot_json(searched).find("\"finetune\"") != std::string::npos);
}

TEST_CASE("ablation axes") {
  CHECK(default_sweep("objectives") == std::vector<std::string>{"rec", "cls", "rec+cls"});
  CHECK(default_sweep("cls_ratio") == std::vector<std::string>{"0.02", "0.01", "0.005", "0.002"});
  EXPECT_ERROR(default_sweep("dropout"), ErrorCategory::usage);
  auto base = tiny_run();
  CHECK(apply_axis(base, "objectives", "rec").train.loss.lambda_cls == 0.0);
  CHECK(apply_axis(base, "objectives", "cls").train.loss.lambda_rec == 0.0);
  CHECK(apply_axis(base, "cls_ratio", "0.005").train.loss.lambda_cls == 0.005);
  CHECK(apply_axis(base, "decoder_depth", "4").model.decoder_depth == 4);
  CHECK(apply_axis(base, "mlp_layers", "3").model.head_layers == 3);
  CHECK(apply_axis(base, "pooling_mode", "class_token").model.pooling == model::PoolingMode::class_token);
  EXPECT_ERROR(apply_axis(base, "decoder_depth", "zero"), ErrorCategory::config);
}

TEST_CASE("singleton ablation grid reproduces a plain pretrain run") {
  auto rc = tiny_run();
  rc.ablate_axis = "cls_ratio";
  rc.ablate_values = "0.01";
  auto split = toy(32, 20);
  auto rows = ablation_grid<float>(rc, split.train, split.test);
  REQUIRE(rows.size() == 1);

  train::TrainState<float> st;
  st.params = model::init_params<float>(rc.model, rc.train.seed);
  auto metrics = train::train(split.train, st, rc.model, rc.train);
  CHECK(rows[0].pretrain_loss == metrics.back().loss);
  CHECK(rows[0].fingerprint == run::fingerprint(rc));

  auto tsv = ablation_tsv(rows);
  CHECK(tsv.rfind("axis\tvalue\tseeds\tft\tlin\tfingerprint\n", 0) == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 2);
  CHECK(ablation_jsonl(rows).find("\"cls_ratio\"") != std::string::npos);
}
