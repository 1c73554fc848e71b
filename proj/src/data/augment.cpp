#include "supmae/data/augment.hpp"

#include <algorithm>
#include <cmath>

#include "supmae/error.hpp"

namespace supmae::data {

CropBox sample_crop_box(std::size_t height, std::size_t width, const CropParams& p, Rng& rng) {
  if (!(p.scale_min > 0 && p.scale_min <= p.scale_max && p.scale_max <= 1.0)) {
    fail(ErrorCategory::config, "crop scale range must satisfy 0 < min <= max <= 1");
  }
  if (!(p.ratio_min > 0 && p.ratio_min <= p.ratio_max)) {
    fail(ErrorCategory::config, "crop aspect range must satisfy 0 < min <= max");
  }
  const double area = static_cast<double>(height * width);
  const double log_lo = std::log(p.ratio_min), log_hi = std::log(p.ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(p.scale_min, p.scale_max);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    const double frac = static_cast<double>(w * h) / area;
    if (w == 0 || h == 0 || w > width || h > height) continue;
    if (frac < p.scale_min || frac > p.scale_max) continue;
    CropBox box;
    box.height = h;
    box.width = w;
    box.top = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(height - h)));
    box.left = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(width - w)));
    return box;
  }
  // Center-crop fallback.
  const double in_ratio = static_cast<double>(width) / static_cast<double>(height);
  std::size_t w = width, h = height;
  if (in_ratio < p.ratio_min) {
    h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(w / p.ratio_min)));
  } else if (in_ratio > p.ratio_max) {
    w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(h * p.ratio_max)));
  }
  h = std::min(h, height);
  w = std::min(w, width);
  return {(height - h) / 2, (width - w) / 2, h, w};
}

Image crop_resize(const Image& img, const CropBox& box, std::size_t out_h, std::size_t out_w) {
  if (box.height == 0 || box.width == 0 || box.top + box.height > img.height ||
      box.left + box.width > img.width) {
    fail(ErrorCategory::geometry, "crop box outside the image");
  }
  if (out_h == 0 || out_w == 0) fail(ErrorCategory::geometry, "crop output size must be positive");
  Image out(out_h, out_w, img.channels);
  const double sy = static_cast<double>(box.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(box.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(box.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, box.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(box.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, box.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double a = img.at(box.top + y0, box.left + x0, c);
        const double b = img.at(box.top + y0, box.left + x1, c);
        const double d = img.at(box.top + y1, box.left + x0, c);
        const double e = img.at(box.top + y1, box.left + x1, c);
        const double v = (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * d + wx * e);
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

LabeledImage random_resized_crop(const LabeledImage& img, std::size_t out_h, std::size_t out_w,
                                 const CropParams& p, Rng& rng) {
  const auto box = sample_crop_box(img.image.height, img.image.width, p, rng);
  return {crop_resize(img.image, box, out_h, out_w), img.label};
}

Image horizontal_flip(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

}  // namespace supmae::data
