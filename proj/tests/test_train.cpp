#include <doctest.h>

#include <cmath>
#include <numbers>

#include "expect_error.hpp"
#include "supmae/data/toyset.hpp"
#include "supmae/model/vit.hpp"
#include "supmae/train/optim.hpp"
#include "supmae/train/schedule.hpp"
#include "supmae/train/trainer.hpp"

using namespace supmae;
using namespace supmae::train;
using diff::Tensor;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.image_h = c.image_w = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.decoder_dim = 8;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  c.num_classes = 10;
  return c;
}

data::Dataset tiny_data(std::size_t n, std::uint64_t seed = 1) {
  return data::make_toy_dataset({.train = n, .test = 10, .size = 16, .seed = seed}).train;
}

TrainConfig pretrain_cfg(std::size_t epochs) {
  auto c = defaults_for(Mode::pretrain);
  c.epochs = epochs;
  c.warmup_epochs = 1;
  c.batch_size = 8;
  c.base_lr = 1e-2;
  return c;
}

template <typename T>
TrainState<T> fresh_state(const model::ModelConfig& m, std::uint64_t seed) {
  TrainState<T> s;
  s.params = model::init_params<T>(m, seed);
  return s;
}

model::ModelParams<double> single(double w) {
  model::ModelParams<double> p;
  p.add("w.weight", Tensor<double>({1, 1}, {w}));
  return p;
}

diff::Gradients<double> grad_of(double g) {
  diff::Gradients<double> out;
  out.add("w.weight", Tensor<double>({1, 1}, {g}));
  return out;
}

}  // namespace

TEST_CASE("linear lr scaling") {
  CHECK(scaled_lr(1.5e-4, 4096) == doctest::Approx(2.4e-3).epsilon(1e-15));
  CHECK(scaled_lr(1e-3, 256) == 1e-3);
  CHECK(scaled_lr(1.5e-4, 64) == doctest::Approx(3.75e-5).epsilon(1e-15));
}

TEST_CASE("lr_at at hand-evaluated points") {
  const double peak = 2e-3;
  // total 101, warmup 10: the cosine spans steps 10..100 and reaches half-way at 55.
  CHECK(lr_at(0, 101, 10, peak, 0.0) == 0.0);
  CHECK(std::abs(lr_at(5, 101, 10, peak, 0.0) - peak / 2) <= 1e-9 * peak);
  CHECK(lr_at(10, 101, 10, peak, 0.0) == peak);
  CHECK(std::abs(lr_at(55, 101, 10, peak, 0.0) - peak / 2) <= 1e-9 * peak);
  const double at70 = 0.5 * peak * (1 + std::cos(std::numbers::pi * 60.0 / 90.0));
  CHECK(std::abs(lr_at(70, 101, 10, peak, 0.0) - at70) <= 1e-9 * peak);
  CHECK(std::abs(lr_at(100, 101, 10, peak, 0.0)) <= 1e-9 * peak);
  CHECK(std::abs(lr_at(100, 101, 10, peak, 1e-5) - 1e-5) <= 1e-9 * peak);
  // Continuity at the warmup boundary: the ramp's limit at step 10 is the peak.
  CHECK(std::abs(lr_at(10, 101, 10, peak, 0.0) - peak * 10.0 / 10.0) <= 1e-12 * peak);
  EXPECT_ERROR(lr_at(0, 10, 10, peak, 0.0), ErrorCategory::config);
}

TEST_CASE("layer-wise multipliers") {
  for (double m : layerwise_multipliers(4, 1.0)) CHECK(m == 1.0);
  auto m = layerwise_multipliers(12, 0.65);
  REQUIRE(m.size() == 14);
  CHECK(m.back() == 1.0);
  CHECK(m[12] == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(m[0] == doctest::Approx(std::pow(0.65, 13)).epsilon(1e-14));
  for (std::size_t g = 1; g < m.size(); ++g) CHECK(m[g] > m[g - 1]);
  CHECK(layer_group("patch_embed.weight", 12) == 0);
  CHECK(layer_group("blocks.0.attn.qkv.weight", 12) == 1);
  CHECK(layer_group("blocks.11.mlp.fc2.bias", 12) == 12);
  CHECK(layer_group("task_head.weight", 12) == 13);
  EXPECT_ERROR(layerwise_multipliers(2, 0.0), ErrorCategory::config);
}

TEST_CASE("AdamW: hand-evaluated first step, zero gradients and decoupled decay") {
  AdamWConfig cfg{0.9, 0.999, 1e-8, 0.0};
  auto p = single(1.0);
  OptState<double> st;
  optimizer_step(p, grad_of(1.0), st, 0.1, cfg);
  CHECK(std::abs(p.get("w.weight")[0] - 0.9) <= 1e-6);
  CHECK(st.step == 1);

  auto z = single(0.7);
  OptState<double> sz;
  optimizer_step(z, grad_of(0.0), sz, 0.1, cfg);
  CHECK(z.get("w.weight")[0] == 0.7);

  cfg.weight_decay = 0.1;
  auto d = single(2.0);
  OptState<double> sd;
  double expect = 2.0;
  for (int k = 0; k < 5; ++k) {
    optimizer_step(d, grad_of(0.0), sd, 0.1, cfg);
    expect *= 1.0 - 0.1 * 0.1;
  }
  CHECK(d.get("w.weight")[0] == doctest::Approx(expect).epsilon(1e-15));

  // Biases are never decayed.
  model::ModelParams<double> b;
  b.add("w.bias", Tensor<double>({1}, {3.0}));
  diff::Gradients<double> gb;
  gb.add("w.bias", Tensor<double>({1}, {0.0}));
  OptState<double> sb;
  optimizer_step(b, gb, sb, 0.1, cfg);
  CHECK(b.get("w.bias")[0] == 3.0);

  auto bad = grad_of(std::nan(""));
  auto msg = EXPECT_ERROR(optimizer_step(p, bad, st, 0.1, cfg), ErrorCategory::numeric);
  CHECK(msg.find("w.weight") != std::string::npos);
}

TEST_CASE("fixed seed gives bitwise identical runs") {
  auto m = tiny_model();
  auto data = tiny_data(32);
  auto cfg = pretrain_cfg(2);
  auto a = fresh_state<float>(m, 3), b = fresh_state<float>(m, 3);
  auto ma = train::train(data, a, m, cfg);
  auto mb = train::train(data, b, m, cfg);
  for (std::size_t e = 0; e < ma.size(); ++e) {
    REQUIRE(ma[e].batch_losses.size() == mb[e].batch_losses.size());
    for (std::size_t i = 0; i < ma[e].batch_losses.size(); ++i) CHECK(ma[e].batch_losses[i] == mb[e].batch_losses[i]);
  }
  CHECK(a.params == b.params);
  CHECK(a.opt == b.opt);
}

TEST_CASE("frozen tables survive an epoch") {
  auto m = tiny_model();
  auto st = fresh_state<float>(m, 4);
  auto before = st.params;
  pretrain_epoch(tiny_data(16), st, m, pretrain_cfg(1));
  CHECK(diff::bitwise_equal(st.params.get("pos_embed"), before.get("pos_embed")));
  CHECK(diff::bitwise_equal(st.params.get("decoder_pos_embed"), before.get("decoder_pos_embed")));
  CHECK_FALSE(diff::bitwise_equal(st.params.get("patch_embed.weight"), before.get("patch_embed.weight")));
}

TEST_CASE("lambda_cls = 0 matches the reconstruction-only path") {
  auto m = tiny_model();
  auto data = tiny_data(16);
  auto cfg = pretrain_cfg(25);
  cfg.loss.lambda_cls = 0.0;
  auto a = fresh_state<double>(m, 5), b = fresh_state<double>(m, 5);
  std::size_t steps = 0;
  double worst = 0;
  while (a.epoch < cfg.epochs) {
    auto ma = pretrain_epoch(data, a, m, cfg);
    auto mb = reconstruction_only_epoch(data, b, m, cfg);
    for (std::size_t i = 0; i < ma.batch_losses.size(); ++i) {
      worst = std::max(worst, std::abs(ma.batch_losses[i] - mb.batch_losses[i]));
      ++steps;
    }
    for (const auto& e : a.params.entries()) {
      if (model::is_pretrain_head_param(e.name)) continue;
      const auto& o = b.params.get(e.name);
      for (std::size_t i = 0; i < o.size(); ++i) worst = std::max(worst, std::abs(e.value[i] - o[i]));
    }
  }
  CHECK(steps == 50);
  CHECK(worst <= 1e-12);
}

TEST_CASE("gradient accumulation equals one larger batch") {
  auto m = tiny_model();
  m.head_layers = 1;
  auto data = tiny_data(16);
  auto cfg = pretrain_cfg(1);
  cfg.warmup_epochs = 0;
  cfg.batch_size = 8;
  auto one = fresh_state<double>(m, 6), acc = fresh_state<double>(m, 6);
  pretrain_epoch(data, one, m, cfg);
  cfg.accum_steps = 2;
  pretrain_epoch(data, acc, m, cfg);
  double worst = 0;
  for (const auto& e : one.params.entries()) {
    const auto& o = acc.params.get(e.name);
    for (std::size_t i = 0; i < o.size(); ++i)
      worst = std::max(worst, std::abs(e.value[i] - o[i]) / std::max(1e-8, std::abs(e.value[i])));
  }
  CHECK(worst <= 1e-6);
  cfg.accum_steps = 3;
  EXPECT_ERROR(cfg.validate(m), ErrorCategory::config);
}

TEST_CASE("pre-training loss trends down over the first 20 batches") {
  auto m = tiny_model();
  auto data = tiny_data(160);
  auto cfg = pretrain_cfg(1);
  cfg.warmup_epochs = 0;
  auto st = fresh_state<float>(m, 7);
  auto metrics = pretrain_epoch(data, st, m, cfg);
  const auto& y = metrics.batch_losses;
  REQUIRE(y.size() == 20);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sx += static_cast<double>(i);
    sy += y[i];
    sxx += static_cast<double>(i * i);
    sxy += static_cast<double>(i) * y[i];
  }
  const double n = static_cast<double>(y.size());
  CHECK((n * sxy - sx * sy) / (n * sxx - sx * sx) < 0.0);
}

TEST_CASE("linear probe keeps the encoder frozen and a random encoder stays near chance") {
  auto m = tiny_model();
  auto toy = data::make_toy_dataset({.train = 200, .test = 100, .size = 16, .seed = 8});
  auto st = fresh_state<float>(m, 8);
  prepare_linprobe(st.params, m, 10, 8);
  CHECK_FALSE(st.params.contains("decoder_embed.weight"));
  const auto before = st.params.checksum(model::is_encoder_param);
  auto cfg = defaults_for(Mode::linprobe);
  cfg.epochs = 5;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 32;
  train::train(toy.train, st, m, cfg);
  CHECK(st.params.checksum(model::is_encoder_param) == before);
  auto feats = pooled_features(st.params, m, toy.test);
  diff::Graph<float> g(diff::GradMode::disabled);
  model::ParamBinding<float> p(g, st.params, [](const std::string&) { return false; });
  auto logits = model::probe_logits(p, g.constant(feats), model::NormMode::eval).value();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < toy.test.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 10; ++c)
      if (logits[i * 10 + c] > logits[i * 10 + best]) best = c;
    correct += static_cast<int>(best) == toy.test.samples[i].label;
  }
  CHECK(std::abs(static_cast<double>(correct) / 100.0 - 0.1) <= 0.1);
}

TEST_CASE("fine-tune setup: head swap and missing encoder tensors") {
  auto m = tiny_model();
  auto params = model::init_params<float>(m, 9);
  auto missing = params;
  missing.erase_if([](const std::string& n) { return n == "blocks.1.mlp.fc1.weight"; });
  EXPECT_ERROR(prepare_finetune(missing, m, 10, 1), ErrorCategory::load);
  prepare_finetune(params, m, 10, 1);
  CHECK(params.contains("task_head.weight"));
  CHECK_FALSE(params.contains("head.fc0.weight"));
  CHECK_FALSE(params.contains("mask_token"));
  TrainState<float> st{params, {}, 0, 0};
  auto cfg = defaults_for(Mode::finetune);
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  cfg.batch_size = 8;
  auto metrics = finetune_epoch(tiny_data(16), st, m, cfg);
  CHECK(metrics.batches == 2);
  CHECK(std::isfinite(metrics.loss));
}

TEST_CASE("config validation") {
  auto m = tiny_model();
  auto cfg = defaults_for(Mode::pretrain);
  cfg.validate(m);
  cfg.mask_ratio = 1.0;
  EXPECT_ERROR(cfg.validate(m), ErrorCategory::config);
  cfg = defaults_for(Mode::pretrain);
  cfg.warmup_epochs = cfg.epochs + 1;
  EXPECT_ERROR(cfg.validate(m), ErrorCategory::config);
  cfg = defaults_for(Mode::pretrain);
  cfg.batch_size = 1;
  EXPECT_ERROR(cfg.validate(m), ErrorCategory::config);
  CHECK(defaults_for(Mode::pretrain).adamw.beta2 == 0.95);
  CHECK(defaults_for(Mode::finetune).layerwise_decay == 0.65);
  CHECK(defaults_for(Mode::linprobe).adamw.weight_decay == 0.0);
  CHECK(epoch_order(3, 2, 50) == epoch_order(3, 2, 50));
  CHECK_FALSE(epoch_order(3, 2, 50) == epoch_order(3, 3, 50));
}
