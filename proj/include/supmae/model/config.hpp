#pragma once

#include <cstddef>
#include <string>

namespace supmae::model {

enum class PoolingMode { global_pool, class_token };

PoolingMode parse_pooling(const std::string& s);
std::string pooling_name(PoolingMode m);

struct ModelConfig {
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  std::size_t channels = 1;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t decoder_dim = 32;
  std::size_t decoder_depth = 1;
  std::size_t decoder_heads = 4;
  std::size_t mlp_ratio = 4;
  // Linear layers in the pre-training classification MLP.
  std::size_t head_layers = 2;
  // Hidden width of that MLP; 0 means embed_dim.
  std::size_t head_hidden = 0;
  PoolingMode pooling = PoolingMode::global_pool;
  std::size_t num_classes = 10;
  // Encoder input standardization (x - pixel_mean) / pixel_std. Reconstruction
  // targets stay in raw pixels.
  double pixel_mean = 0.5;
  double pixel_std = 0.25;

  std::size_t grid_h() const { return image_h / patch_size; }
  std::size_t grid_w() const { return image_w / patch_size; }
  std::size_t num_patches() const { return grid_h() * grid_w(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t hidden_width() const { return head_hidden == 0 ? embed_dim : head_hidden; }
  bool has_class_token() const { return pooling == PoolingMode::class_token; }

  // Throws a config error naming the violated constraint.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace supmae::model
