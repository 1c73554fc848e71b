#include <doctest.h>

#include <cmath>

#include "expect_error.hpp"
#include "oracles.hpp"
#include "supmae/data/batch.hpp"
#include "supmae/diff/ops.hpp"
#include "supmae/model/vit.hpp"
#include "supmae/train/steps.hpp"

using namespace supmae;
using namespace supmae::model;
using diff::Graph;
using diff::GradMode;
using diff::Tensor;

namespace {

ModelConfig small_cfg() {
  ModelConfig c;
  c.image_h = c.image_w = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.decoder_dim = 8;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  c.num_classes = 5;
  return c;
}

std::vector<data::PatchGrid> random_grids(const ModelConfig& cfg, std::size_t b, std::uint64_t seed) {
  std::vector<data::PatchGrid> out;
  for (std::size_t i = 0; i < b; ++i) {
    auto t = oracle::random_tensor({cfg.image_h, cfg.image_w, cfg.channels}, seed + i, 0.0, 1.0);
    data::Image img(cfg.image_h, cfg.image_w, cfg.channels);
    for (std::size_t k = 0; k < t.size(); ++k) img.pixels[k] = static_cast<float>(t[k]);
    out.push_back(data::patchify(img, cfg.patch_size));
  }
  return out;
}

std::vector<data::MaskPlan> plans_for(std::size_t b, std::size_t n, double ratio, std::uint64_t seed) {
  std::vector<data::MaskPlan> p;
  for (std::size_t i = 0; i < b; ++i) p.push_back(data::plan_for(seed, 0, i, n, ratio));
  return p;
}

// Closed-form parameter counts of the layout, written out by hand.
std::size_t block_count(std::size_t d, std::size_t r) {
  return 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * r * d + r * d) + (r * d * d + d);
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  ModelConfig c;
  c.embed_dim = 64;
  c.depth = 2;
  c.decoder_depth = 1;
  c.head_layers = 2;
  auto p = init_params<float>(c, 0);
  const std::size_t d = 64, dd = c.decoder_dim, k = c.patch_dim(), r = c.mlp_ratio, n = c.num_patches();
  const std::size_t encoder = (k * d + d) + 2 * block_count(d, r) + 2 * d;
  const std::size_t decoder = (d * dd + dd) + dd + block_count(dd, r) + 2 * dd + (dd * k + k);
  const std::size_t head = (d * d + d) + 2 * d + (d * 10 + 10);
  CHECK(p.count_scalars(ParamKind::trainable) == encoder + decoder + head);
  CHECK(p.count_scalars(ParamKind::frozen) == n * d + n * dd);
  CHECK(p.count_scalars(ParamKind::buffer) == 2 * d);
  CHECK_FALSE(p.contains("cls_token"));
  c.pooling = PoolingMode::class_token;
  auto pc = init_params<float>(c, 0);
  CHECK(pc.count_scalars(ParamKind::trainable) == encoder + decoder + head + d);
  CHECK(pc.count_scalars(ParamKind::frozen) == (n + 1) * d + n * dd);
}

TEST_CASE("init is deterministic with unit norm scales and zero biases") {
  auto cfg = small_cfg();
  auto a = init_params<float>(cfg, 4);
  CHECK(a == init_params<float>(cfg, 4));
  CHECK_FALSE(a == init_params<float>(cfg, 5));
  for (const auto& e : a.entries()) {
    const bool norm_scale = e.name.find("norm") != std::string::npos && e.name.ends_with(".weight");
    if (norm_scale)
      for (float v : e.value.data()) REQUIRE(v == 1.0f);
    if (e.name.ends_with(".bias"))
      for (float v : e.value.data()) REQUIRE(v == 0.0f);
    if (e.name.ends_with(".weight") && e.value.rank() == 2) {
      double s = 0;
      for (float v : e.value.data()) {
        REQUIRE(std::abs(v) <= 0.04f + 1e-7f);
        s += v * v;
      }
      if (e.value.size() >= 200) CHECK(std::sqrt(s / e.value.size()) == doctest::Approx(0.0176).epsilon(0.15));
    }
  }
  auto bad = cfg;
  bad.heads = 3;
  EXPECT_ERROR(init_params<float>(bad, 0), ErrorCategory::config);
}

TEST_CASE("sin-cos table") {
  auto one = sincos_pos_embed<double>(1, 1, 8, false);
  for (std::size_t i = 0; i < 8; ++i) CHECK(one[i] == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(sincos_pos_embed<double>(4, 4, 16, false) == sincos_pos_embed<double>(4, 4, 16, false));
  auto cls = sincos_pos_embed<double>(2, 2, 8, true);
  CHECK(cls.shape() == diff::Shape{5, 8});
  for (std::size_t i = 0; i < 8; ++i) CHECK(cls[i] == 0.0);
  EXPECT_ERROR(sincos_pos_embed<double>(2, 2, 6, false), ErrorCategory::config);

  auto t = sincos_pos_embed<double>(16, 16, 32, false);
  double min_d = 1e300;
  for (std::size_t a = 0; a < 256; ++a)
    for (std::size_t b = a + 1; b < 256; ++b) {
      double s = 0;
      for (std::size_t c = 0; c < 32; ++c) s += (t[a * 32 + c] - t[b * 32 + c]) * (t[a * 32 + c] - t[b * 32 + c]);
      min_d = std::min(min_d, s);
    }
  CHECK(min_d > 0.0);
}

TEST_CASE("full visibility encode equals encode_full bitwise") {
  auto cfg = small_cfg();
  auto params = init_params<float>(cfg, 1);
  auto grids = random_grids(cfg, 2, 10);
  Graph<float> g(GradMode::disabled);
  ParamBinding<float> p(g, params, [](const std::string&) { return false; });
  std::vector<data::MaskPlan> full(2, data::full_visibility_plan(cfg.num_patches()));
  auto batch = data::make_batch(grids, full, std::vector<int>{0, 1});
  auto a = encode_visible(p, cfg, batch.visible, full).tokens.value();
  auto b = encode_full(p, cfg, data::stack_patches(grids)).tokens.value();
  CHECK(diff::bitwise_equal(a, b));
}

TEST_CASE("encoder is equivariant to visible-order permutations") {
  auto cfg = small_cfg();
  auto params = init_params<double>(cfg, 2);
  auto grids = random_grids(cfg, 1, 20);
  auto plan = data::plan_for(3, 0, 0, cfg.num_patches(), 0.5);
  auto batch = data::make_batch(grids, std::vector<data::MaskPlan>{plan}, std::vector<int>{0});
  const std::size_t v = plan.num_visible(), k = cfg.patch_dim();
  std::vector<std::size_t> sigma(v);
  for (std::size_t i = 0; i < v; ++i) sigma[i] = (i * 3 + 1) % v;

  auto permuted = plan;
  Tensor<float> vis({1, v, k});
  for (std::size_t i = 0; i < v; ++i) {
    permuted.visible_idx[i] = plan.visible_idx[sigma[i]];
    permuted.shuffle_perm[i] = permuted.visible_idx[i];
    for (std::size_t c = 0; c < k; ++c) vis[i * k + c] = batch.visible[sigma[i] * k + c];
  }
  data::validate_plan(permuted);
  Graph<double> g(GradMode::disabled);
  ParamBinding<double> p(g, params, [](const std::string&) { return false; });
  auto q = encode_visible(p, cfg, batch.visible.cast<double>(), {plan}).tokens.value();
  auto qp = encode_visible(p, cfg, vis.cast<double>(), {permuted}).tokens.value();
  const std::size_t d = cfg.embed_dim;
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t c = 0; c < d; ++c) REQUIRE(std::abs(qp[i * d + c] - q[sigma[i] * d + c]) <= 1e-6);
}

TEST_CASE("information barrier: masked pixels never reach q_v, logits or the cls loss") {
  auto cfg = small_cfg();
  auto params = init_params<float>(cfg, 3);
  auto grids = random_grids(cfg, 4, 30);
  auto plans = plans_for(4, cfg.num_patches(), 0.75, 5);
  std::vector<int> labels{0, 1, 2, 3};
  auto perturbed = grids;
  for (std::size_t s = 0; s < 4; ++s)
    for (auto m : plans[s].masked_idx)
      for (std::size_t c = 0; c < cfg.patch_dim(); ++c) perturbed[s].patch(m)[c] = 1.0f - perturbed[s].patch(m)[c] * 0.5f;

  objectives::LossWeights w;
  w.lambda_cls = 0.3;
  auto run = [&](const std::vector<data::PatchGrid>& gs) {
    Graph<float> g(GradMode::disabled);
    ParamBinding<float> p(g, params, [](const std::string&) { return false; });
    auto batch = data::make_batch(gs, plans, labels);
    auto enc = encode_visible(p, cfg, batch.visible, plans);
    auto logits = classify_pooled(p, cfg, enc, NormMode::train);
    auto cls = objectives::classification_loss(logits, labels, w.tau);
    return std::tuple{enc.tokens.value(), logits.value(), cls.value()};
  };
  auto [q1, l1, c1] = run(grids);
  auto [q2, l2, c2] = run(perturbed);
  CHECK(diff::bitwise_equal(q1, q2));
  CHECK(diff::bitwise_equal(l1, l2));
  CHECK(diff::bitwise_equal(c1, c2));

  // dL_rec/dpred is exactly zero on visible rows.
  Graph<float> g;
  auto batch = data::make_batch(grids, plans, labels);
  auto pred = g.leaf("pred", oracle::random_tensor({4, cfg.num_patches(), cfg.patch_dim()}, 77).cast<float>());
  auto targets = train::reconstruction_targets<float>(batch, true);
  auto grad = g.backward(objectives::reconstruction_loss(pred, targets, plans)).at("pred");
  for (std::size_t s = 0; s < 4; ++s) {
    for (auto v : plans[s].visible_idx)
      for (std::size_t c = 0; c < cfg.patch_dim(); ++c) REQUIRE(grad[(s * cfg.num_patches() + v) * cfg.patch_dim() + c] == 0.0f);
    for (auto m : plans[s].masked_idx) {
      float mag = 0;
      for (std::size_t c = 0; c < cfg.patch_dim(); ++c) mag += std::abs(grad[(s * cfg.num_patches() + m) * cfg.patch_dim() + c]);
      CHECK(mag > 0.0f);
    }
  }
}

TEST_CASE("unshuffle places visible rows at their patch positions") {
  Graph<double> g(GradMode::disabled);
  const std::size_t n = 6, d = 2;
  auto plan = data::plan_for(9, 0, 0, n, 0.5);
  Tensor<double> x({1, plan.num_visible(), d});
  for (std::size_t j = 0; j < plan.num_visible(); ++j) x[j * d] = x[j * d + 1] = 100.0 + static_cast<double>(j);
  auto y = diff::unshuffle_fill(g.constant(x), g.constant(Tensor<double>::filled({d}, -1.0)), {plan.shuffle_perm}).value();
  for (std::size_t j = 0; j < plan.num_visible(); ++j) CHECK(y[plan.visible_idx[j] * d] == 100.0 + static_cast<double>(j));
  for (auto m : plan.masked_idx) CHECK(y[m * d + 1] == -1.0);
}

TEST_CASE("decoder output shape and plan contract") {
  auto cfg = small_cfg();
  auto params = init_params<float>(cfg, 4);
  auto grids = random_grids(cfg, 2, 40);
  for (double ratio : {0.0, 0.5, 0.75}) {
    auto plans = plans_for(2, cfg.num_patches(), ratio, 1);
    auto batch = data::make_batch(grids, plans, std::vector<int>{0, 1});
    Graph<float> g(GradMode::disabled);
    ParamBinding<float> p(g, params, [](const std::string&) { return false; });
    auto enc = encode_visible(p, cfg, batch.visible, plans);
    auto pred = decode_reconstruct(p, cfg, enc.tokens, plans);
    CHECK(pred.shape() == diff::Shape{2, cfg.num_patches(), cfg.patch_dim()});
    auto broken = plans;
    broken[0].shuffle_perm.clear();
    EXPECT_ERROR(decode_reconstruct(p, cfg, enc.tokens, broken), ErrorCategory::contract);
  }
}

TEST_CASE("pooling: duplicated tokens, single-layer head, class token mode") {
  Graph<double> g(GradMode::disabled);
  Tensor<double> one({1, 1, 4}, {1, 2, 3, 4});
  Tensor<double> dup({1, 3, 4}, {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4});
  auto md = diff::mean_tokens(g.constant(dup)).value();
  auto mo = diff::mean_tokens(g.constant(one)).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(md[i] == doctest::Approx(mo[i]).epsilon(1e-15));

  auto cfg = small_cfg();
  cfg.head_layers = 1;
  auto params = init_params<double>(cfg, 6);
  CHECK_FALSE(params.contains("head.bn0.weight"));
  auto grids = random_grids(cfg, 2, 50);
  ParamBinding<double> p(g, params, [](const std::string&) { return false; });
  auto enc = encode_full(p, cfg, data::stack_patches(grids).cast<double>());
  auto logits = classify_pooled(p, cfg, enc, NormMode::train).value();
  auto pooled = pooled_feature(cfg, enc).value();
  const auto& w = params.get("head.fc0.weight");
  const auto& b = params.get("head.fc0.bias");
  auto ref = oracle::matmul(pooled.values(), w.values(), 2, cfg.embed_dim, cfg.num_classes);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(logits[i] == doctest::Approx(ref[i] + b[i % cfg.num_classes]).epsilon(1e-12));

  auto ccfg = small_cfg();
  ccfg.pooling = PoolingMode::class_token;
  auto cp = init_params<double>(ccfg, 6);
  ParamBinding<double> pc(g, cp, [](const std::string&) { return false; });
  auto cenc = encode_full(pc, ccfg, data::stack_patches(grids).cast<double>());
  CHECK(cenc.class_feature.valid());
  CHECK(cenc.tokens.shape() == diff::Shape{2, ccfg.num_patches(), ccfg.embed_dim});
  // class_token pooling against global_pool parameters (no cls_token).
  EXPECT_ERROR(encode_full(p, ccfg, data::stack_patches(grids).cast<double>()), ErrorCategory::config);
}

TEST_CASE("eval-mode outputs do not depend on batch composition") {
  auto cfg = small_cfg();
  auto params = init_params<float>(cfg, 7);
  auto grids = random_grids(cfg, 1, 60);
  std::vector<data::PatchGrid> two{grids[0], grids[0]};
  auto run = [&](const std::vector<data::PatchGrid>& gs) {
    Graph<float> g(GradMode::disabled);
    ParamBinding<float> p(g, params, [](const std::string&) { return false; });
    return classify_pooled(p, cfg, encode_full(p, cfg, data::stack_patches(gs)), NormMode::eval).value();
  };
  auto a = run(grids), b = run(two);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    CHECK(std::abs(a[c] - b[c]) <= 1e-6);
    CHECK(std::abs(a[c] - b[cfg.num_classes + c]) <= 1e-6);
  }
}

TEST_CASE("every trainable parameter receives a gradient") {
  for (auto mode : {PoolingMode::global_pool, PoolingMode::class_token}) {
    auto cfg = small_cfg();
    cfg.pooling = mode;
    auto params = init_params<double>(cfg, 8);
    auto grids = random_grids(cfg, 4, 70);
    auto plans = plans_for(4, cfg.num_patches(), 0.5, 2);
    auto batch = data::make_batch(grids, plans, std::vector<int>{0, 1, 2, 3});
    Graph<double> g;
    ParamBinding<double> p(g, params, [&](const std::string& n) { return all_trainable(params, n); });
    objectives::LossWeights w;
    w.lambda_cls = 0.5;
    auto out = train::pretrain_forward(p, cfg, batch, w, true);
    auto grads = g.backward(out.total);
    for (const auto& e : params.entries()) {
      INFO(e.name);
      if (e.kind != ParamKind::trainable) {
        CHECK_FALSE(grads.contains(e.name));
        continue;
      }
      REQUIRE(grads.contains(e.name));
      double mag = 0;
      for (double v : grads.at(e.name).data()) mag += std::abs(v);
      CHECK(mag > 0.0);
    }
  }
}
