#include "supmae/model/config.hpp"

#include "supmae/error.hpp"

namespace supmae::model {

PoolingMode parse_pooling(const std::string& s) {
  if (s == "global_pool") return PoolingMode::global_pool;
  if (s == "class_token") return PoolingMode::class_token;
  fail(ErrorCategory::config, "pooling_mode must be global_pool or class_token, got '" + s + "'");
}

std::string pooling_name(PoolingMode m) {
  return m == PoolingMode::global_pool ? "global_pool" : "class_token";
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCategory::config, what);
  };
  need(patch_size > 0, "patch_size must be positive");
  need(image_h > 0 && image_w > 0 && channels > 0, "image extents must be positive");
  need(image_h % patch_size == 0 && image_w % patch_size == 0,
       "image_size must be divisible by patch_size");
  need(embed_dim > 0 && heads > 0 && embed_dim % heads == 0, "embed_dim must be divisible by heads");
  need(decoder_dim > 0 && decoder_heads > 0 && decoder_dim % decoder_heads == 0,
       "decoder_dim must be divisible by decoder_heads");
  need(embed_dim % 4 == 0, "embed_dim must be divisible by 4 (2-D sin-cos table)");
  need(decoder_dim % 4 == 0, "decoder_dim must be divisible by 4 (2-D sin-cos table)");
  need(depth >= 1, "depth must be >= 1");
  need(mlp_ratio >= 1, "mlp_ratio must be >= 1");
  need(head_layers >= 1, "head_layers must be >= 1");
  need(num_classes >= 1, "num_classes must be >= 1");
  need(pixel_std > 0, "pixel_std must be positive");
}

}  // namespace supmae::model
