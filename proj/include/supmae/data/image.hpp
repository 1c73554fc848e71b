#pragma once

#include <cstddef>
#include <vector>

namespace supmae::data {

// H x W x C pixels, channel-last, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), channels(c), pixels(h * w * c, 0.0f) {}

  float at(std::size_t y, std::size_t x, std::size_t ch) const {
    return pixels[(y * width + x) * channels + ch];
  }
  float& at(std::size_t y, std::size_t x, std::size_t ch) {
    return pixels[(y * width + x) * channels + ch];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct LabeledImage {
  Image image;
  int label = 0;
};

struct Dataset {
  std::vector<LabeledImage> samples;
  int num_classes = 0;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

// Samples at `indices`, keeping the class count.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace supmae::data
