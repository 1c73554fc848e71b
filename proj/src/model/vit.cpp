#include "supmae/model/vit.hpp"

#include <cmath>

#include "supmae/error.hpp"
#include "supmae/rng.hpp"

namespace supmae::model {
namespace {

using diff::Shape;
using diff::Tensor;
using diff::Var;

constexpr double kInitStd = 0.02;

template <typename T>
Tensor<T> trunc_normal(Shape shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(kInitStd));
  return t;
}

template <typename T>
void add_linear(ModelParams<T>& p, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  p.add(prefix + ".weight", trunc_normal<T>({in, out}, rng));
  p.add(prefix + ".bias", Tensor<T>(Shape{out}));
}

template <typename T>
void add_norm(ModelParams<T>& p, const std::string& prefix, std::size_t dim) {
  p.add(prefix + ".weight", Tensor<T>::filled({dim}, T{1}));
  p.add(prefix + ".bias", Tensor<T>(Shape{dim}));
}

template <typename T>
void add_batch_norm(ModelParams<T>& p, const std::string& prefix, std::size_t dim, bool affine) {
  if (affine) add_norm(p, prefix, dim);
  p.add(prefix + ".running_mean", Tensor<T>(Shape{dim}), ParamKind::buffer);
  p.add(prefix + ".running_var", Tensor<T>::filled({dim}, T{1}), ParamKind::buffer);
}

template <typename T>
void add_block(ModelParams<T>& p, const std::string& prefix, std::size_t dim, std::size_t mlp_ratio,
               Rng& rng) {
  add_norm(p, prefix + ".norm1", dim);
  add_linear(p, prefix + ".attn.qkv", dim, 3 * dim, rng);
  add_linear(p, prefix + ".attn.proj", dim, dim, rng);
  add_norm(p, prefix + ".norm2", dim);
  add_linear(p, prefix + ".mlp.fc1", dim, mlp_ratio * dim, rng);
  add_linear(p, prefix + ".mlp.fc2", mlp_ratio * dim, dim, rng);
}

template <typename T>
Var<T> batch_norm_layer(const ParamBinding<T>& p, const std::string& pre, Var<T> x, NormMode mode,
                        bool affine, BatchStats* stats) {
  Var<T> gamma, beta;
  if (affine) {
    gamma = p.var(pre + ".weight");
    beta = p.var(pre + ".bias");
  }
  if (mode == NormMode::train) {
    if (stats) stats->emplace_back(pre, diff::batch_moments(x.value()));
    return diff::batch_norm(x, gamma, beta);
  }
  return diff::batch_norm_eval(x, p.tensor(pre + ".running_mean"), p.tensor(pre + ".running_var"),
                               gamma, beta);
}

void check_plans(const std::vector<data::MaskPlan>& plans, std::size_t batch, std::size_t n,
                 std::size_t v, const char* where) {
  if (plans.size() != batch) {
    fail(ErrorCategory::dimension, std::string(where) + ": " + std::to_string(plans.size()) +
                                       " plans for batch of " + std::to_string(batch));
  }
  for (const auto& plan : plans) {
    if (plan.num_patches != n) {
      fail(ErrorCategory::dimension, std::string(where) + ": plan covers " +
                                         std::to_string(plan.num_patches) + " patches, model expects " +
                                         std::to_string(n));
    }
    if (plan.num_visible() != v) {
      fail(ErrorCategory::dimension, std::string(where) + ": plan keeps " +
                                         std::to_string(plan.num_visible()) + " patches but " +
                                         std::to_string(v) + " visible tokens were given");
    }
  }
}

}  // namespace

template <typename T>
Var<T> block_forward(const ParamBinding<T>& p, const std::string& pre, Var<T> x, std::size_t heads) {
  using namespace diff;
  const std::size_t d = x.shape()[2];
  auto h = layer_norm(x, p.var(pre + ".norm1.weight"), p.var(pre + ".norm1.bias"));
  auto qkv = linear(h, p.var(pre + ".attn.qkv.weight"), p.var(pre + ".attn.qkv.bias"));
  auto q = split_heads(slice_last(qkv, 0, d), heads);
  auto k = split_heads(slice_last(qkv, d, d), heads);
  auto v = split_heads(slice_last(qkv, 2 * d, d), heads);
  auto a = merge_heads(attention(q, k, v));
  x = add(x, linear(a, p.var(pre + ".attn.proj.weight"), p.var(pre + ".attn.proj.bias")));
  h = layer_norm(x, p.var(pre + ".norm2.weight"), p.var(pre + ".norm2.bias"));
  h = gelu(linear(h, p.var(pre + ".mlp.fc1.weight"), p.var(pre + ".mlp.fc1.bias")));
  h = linear(h, p.var(pre + ".mlp.fc2.weight"), p.var(pre + ".mlp.fc2.bias"));
  return add(x, h);
}


template <typename T>
Tensor<T> sincos_pos_embed(std::size_t grid_h, std::size_t grid_w, std::size_t dim, bool class_slot) {
  if (dim == 0 || dim % 4 != 0) {
    fail(ErrorCategory::config, "sin-cos positional table needs dim divisible by 4, got " + std::to_string(dim));
  }
  const std::size_t quarter = dim / 4;
  const std::size_t offset = class_slot ? 1 : 0;
  Tensor<T> table(Shape{grid_h * grid_w + offset, dim});
  for (std::size_t gy = 0; gy < grid_h; ++gy)
    for (std::size_t gx = 0; gx < grid_w; ++gx) {
      T* row = table.data().data() + (offset + gy * grid_w + gx) * dim;
      for (std::size_t i = 0; i < quarter; ++i) {
        const double omega = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(quarter));
        const double ay = static_cast<double>(gy) * omega;
        const double ax = static_cast<double>(gx) * omega;
        row[2 * i] = static_cast<T>(std::sin(ay));
        row[2 * i + 1] = static_cast<T>(std::cos(ay));
        row[dim / 2 + 2 * i] = static_cast<T>(std::sin(ax));
        row[dim / 2 + 2 * i + 1] = static_cast<T>(std::cos(ax));
      }
    }
  return table;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng::derive(seed, Stream::init);
  ModelParams<T> p;
  const std::size_t d = cfg.embed_dim, dd = cfg.decoder_dim;
  add_linear(p, "patch_embed", cfg.patch_dim(), d, rng);
  if (cfg.has_class_token()) p.add("cls_token", trunc_normal<T>({d}, rng));
  p.add("pos_embed", sincos_pos_embed<T>(cfg.grid_h(), cfg.grid_w(), d, cfg.has_class_token()),
        ParamKind::frozen);
  for (std::size_t i = 0; i < cfg.depth; ++i) add_block(p, "blocks." + std::to_string(i), d, cfg.mlp_ratio, rng);
  add_norm(p, "norm", d);

  add_linear(p, "decoder_embed", d, dd, rng);
  p.add("mask_token", trunc_normal<T>({dd}, rng));
  p.add("decoder_pos_embed", sincos_pos_embed<T>(cfg.grid_h(), cfg.grid_w(), dd, false), ParamKind::frozen);
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
    add_block(p, "decoder_blocks." + std::to_string(i), dd, cfg.mlp_ratio, rng);
  add_norm(p, "decoder_norm", dd);
  add_linear(p, "decoder_pred", dd, cfg.patch_dim(), rng);

  std::size_t in = d;
  for (std::size_t l = 0; l < cfg.head_layers; ++l) {
    const bool last = l + 1 == cfg.head_layers;
    const std::size_t out = last ? cfg.num_classes : cfg.hidden_width();
    add_linear(p, "head.fc" + std::to_string(l), in, out, rng);
    if (!last) add_batch_norm(p, "head.bn" + std::to_string(l), out, true);
    in = out;
  }
  return p;
}

template <typename T>
void strip_to_encoder(ModelParams<T>& params) {
  params.erase_if([](const std::string& n) { return !is_encoder_param(n); });
}

template <typename T>
void add_task_head(ModelParams<T>& params, const ModelConfig& cfg, std::size_t num_classes,
                   std::uint64_t seed) {
  Rng rng = Rng::derive(seed, Stream::head_init, {1});
  params.erase_if([](const std::string& n) { return n.rfind("task_head.", 0) == 0; });
  add_linear(params, "task_head", cfg.embed_dim, num_classes, rng);
}

template <typename T>
void add_probe_head(ModelParams<T>& params, const ModelConfig& cfg, std::size_t num_classes,
                    std::uint64_t seed) {
  Rng rng = Rng::derive(seed, Stream::head_init, {2});
  params.erase_if([](const std::string& n) { return n.rfind("probe.", 0) == 0; });
  add_batch_norm(params, "probe.bn", cfg.embed_dim, false);
  add_linear(params, "probe.fc", cfg.embed_dim, num_classes, rng);
}

template <typename T>
EncoderOutput<T> encode_visible(const ParamBinding<T>& p, const ModelConfig& cfg,
                                const Tensor<T>& visible, const std::vector<data::MaskPlan>& plans) {
  using namespace diff;
  if (visible.rank() != 3 || visible.dim(2) != cfg.patch_dim()) {
    fail(ErrorCategory::dimension, "encode_visible: expected B x V x " + std::to_string(cfg.patch_dim()) +
                                       " patches, got " + shape_str(visible.shape()));
  }
  const std::size_t b = visible.dim(0), v = visible.dim(1);
  check_plans(plans, b, cfg.num_patches(), v, "encode_visible");
  const bool cls = cfg.has_class_token();
  if (cls && !p.contains("cls_token")) {
    fail(ErrorCategory::config, "class_token pooling needs a cls_token parameter");
  }
  auto& g = p.graph();
  diff::Tensor<T> input = visible;
  const double inv_std = 1.0 / cfg.pixel_std;
  for (auto& px : input.data()) px = static_cast<T>((static_cast<double>(px) - cfg.pixel_mean) * inv_std);
  auto x = linear(g.constant(std::move(input)), p.var("patch_embed.weight"), p.var("patch_embed.bias"));
  std::vector<std::size_t> rows;
  rows.reserve(b * v);
  for (const auto& plan : plans)
    for (auto idx : plan.visible_idx) rows.push_back(idx + (cls ? 1 : 0));
  auto pos = p.var("pos_embed");
  x = add(x, gather_rows(pos, rows, Shape{b, v}));
  if (cls) {
    auto slot = reshape(gather_rows(pos, {0}, Shape{1}), Shape{cfg.embed_dim});
    x = prepend_token(add(p.var("cls_token"), slot), x);
  }
  for (std::size_t i = 0; i < cfg.depth; ++i) x = block_forward(p, "blocks." + std::to_string(i), x, cfg.heads);
  x = layer_norm(x, p.var("norm.weight"), p.var("norm.bias"));
  EncoderOutput<T> out;
  if (cls) {
    out.class_feature = reshape(slice_tokens(x, 0, 1), Shape{b, cfg.embed_dim});
    out.tokens = slice_tokens(x, 1, v);
  } else {
    out.tokens = x;
  }
  return out;
}

template <typename T>
EncoderOutput<T> encode_full(const ParamBinding<T>& p, const ModelConfig& cfg, const Tensor<T>& patches) {
  if (patches.rank() != 3 || patches.dim(1) != cfg.num_patches()) {
    fail(ErrorCategory::dimension, "encode_full: expected B x " + std::to_string(cfg.num_patches()) +
                                       " x K patches, got " + diff::shape_str(patches.shape()));
  }
  std::vector<data::MaskPlan> plans(patches.dim(0), data::full_visibility_plan(cfg.num_patches()));
  return encode_visible(p, cfg, patches, plans);
}

template <typename T>
Var<T> decode_reconstruct(const ParamBinding<T>& p, const ModelConfig& cfg, Var<T> q_v,
                          const std::vector<data::MaskPlan>& plans) {
  using namespace diff;
  const auto& qs = q_v.shape();
  if (qs.size() != 3 || qs[2] != cfg.embed_dim) {
    fail(ErrorCategory::dimension, "decode_reconstruct: q_v must be B x V x " + std::to_string(cfg.embed_dim) +
                                       ", got " + shape_str(qs));
  }
  const std::size_t n = cfg.num_patches();
  for (const auto& plan : plans) {
    if (plan.shuffle_perm.size() != n) {
      fail(ErrorCategory::contract, "decode_reconstruct: mask plan lacks a full shuffle permutation");
    }
  }
  check_plans(plans, qs[0], n, qs[1], "decode_reconstruct");
  std::vector<std::vector<std::size_t>> order;
  order.reserve(plans.size());
  for (const auto& plan : plans) order.push_back(plan.shuffle_perm);

  auto y = linear(q_v, p.var("decoder_embed.weight"), p.var("decoder_embed.bias"));
  y = unshuffle_fill(y, p.var("mask_token"), order);
  y = add_broadcast(y, p.var("decoder_pos_embed"));
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
    y = block_forward(p, "decoder_blocks." + std::to_string(i), y, cfg.decoder_heads);
  y = layer_norm(y, p.var("decoder_norm.weight"), p.var("decoder_norm.bias"));
  return linear(y, p.var("decoder_pred.weight"), p.var("decoder_pred.bias"));
}

template <typename T>
Var<T> pooled_feature(const ModelConfig& cfg, const EncoderOutput<T>& enc) {
  if (cfg.pooling == PoolingMode::global_pool) return diff::mean_tokens(enc.tokens);
  if (!enc.class_feature.valid()) {
    fail(ErrorCategory::config, "class_token pooling requested but the encoder produced no class token");
  }
  return enc.class_feature;
}

template <typename T>
Var<T> classify_pooled(const ParamBinding<T>& p, const ModelConfig& cfg, const EncoderOutput<T>& enc,
                       NormMode mode, BatchStats* stats) {
  if (!p.contains("head.fc0.weight")) {
    fail(ErrorCategory::capability, "parameters carry no pre-training classification head");
  }
  auto h = pooled_feature(cfg, enc);
  for (std::size_t l = 0; l < cfg.head_layers; ++l) {
    const std::string fc = "head.fc" + std::to_string(l);
    h = diff::linear(h, p.var(fc + ".weight"), p.var(fc + ".bias"));
    if (l + 1 < cfg.head_layers) {
      h = batch_norm_layer(p, "head.bn" + std::to_string(l), h, mode, true, stats);
      h = diff::relu(h);
    }
  }
  return h;
}

template <typename T>
Var<T> task_head_logits(const ParamBinding<T>& p, Var<T> pooled) {
  return diff::linear(pooled, p.var("task_head.weight"), p.var("task_head.bias"));
}

template <typename T>
Var<T> probe_logits(const ParamBinding<T>& p, Var<T> pooled, NormMode mode, BatchStats* stats) {
  auto h = batch_norm_layer(p, "probe.bn", pooled, mode, false, stats);
  return diff::linear(h, p.var("probe.fc.weight"), p.var("probe.fc.bias"));
}

template <typename T>
void update_running_stats(ModelParams<T>& params, const BatchStats& stats, std::size_t batch,
                          double momentum) {
  const double unbias = batch > 1 ? static_cast<double>(batch) / static_cast<double>(batch - 1) : 1.0;
  for (const auto& [prefix, mom] : stats) {
    auto& rm = params.get_mut(prefix + ".running_mean");
    auto& rv = params.get_mut(prefix + ".running_var");
    for (std::size_t j = 0; j < rm.size(); ++j) {
      rm[j] = static_cast<T>((1.0 - momentum) * rm[j] + momentum * mom.mean[j]);
      rv[j] = static_cast<T>((1.0 - momentum) * rv[j] + momentum * mom.biased_var[j] * unbias);
    }
  }
}

#define SUPMAE_INSTANTIATE_VIT(T)                                                                     \
  template Tensor<T> sincos_pos_embed<T>(std::size_t, std::size_t, std::size_t, bool);               \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                          \
  template void strip_to_encoder<T>(ModelParams<T>&);                                                 \
  template void add_task_head<T>(ModelParams<T>&, const ModelConfig&, std::size_t, std::uint64_t);    \
  template void add_probe_head<T>(ModelParams<T>&, const ModelConfig&, std::size_t, std::uint64_t);   \
  template EncoderOutput<T> encode_visible<T>(const ParamBinding<T>&, const ModelConfig&,             \
                                              const Tensor<T>&, const std::vector<data::MaskPlan>&);  \
  template EncoderOutput<T> encode_full<T>(const ParamBinding<T>&, const ModelConfig&,                \
                                           const Tensor<T>&);                                         \
  template Var<T> decode_reconstruct<T>(const ParamBinding<T>&, const ModelConfig&, Var<T>,           \
                                        const std::vector<data::MaskPlan>&);                          \
  template Var<T> pooled_feature<T>(const ModelConfig&, const EncoderOutput<T>&);                     \
  template Var<T> classify_pooled<T>(const ParamBinding<T>&, const ModelConfig&,                      \
                                     const EncoderOutput<T>&, NormMode, BatchStats*);                 \
  template Var<T> task_head_logits<T>(const ParamBinding<T>&, Var<T>);                                \
  template Var<T> probe_logits<T>(const ParamBinding<T>&, Var<T>, NormMode, BatchStats*);             \
  template void update_running_stats<T>(ModelParams<T>&, const BatchStats&, std::size_t, double);         \
  template Var<T> block_forward<T>(const ParamBinding<T>&, const std::string&, Var<T>, std::size_t);

SUPMAE_INSTANTIATE_VIT(float)
SUPMAE_INSTANTIATE_VIT(double)
SUPMAE_INSTANTIATE_VIT(long double)

#undef SUPMAE_INSTANTIATE_VIT

}  // namespace supmae::model
