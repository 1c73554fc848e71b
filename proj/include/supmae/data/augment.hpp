#pragma once

#include <cstddef>

#include "supmae/data/image.hpp"
#include "supmae/rng.hpp"

namespace supmae::data {

struct CropBox {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct CropParams {
  double scale_min = 0.2;
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;

  friend bool operator==(const CropParams&, const CropParams&) = default;
};

// Up to 10 draws of (area fraction, log-uniform aspect); a draw is accepted
// when the rounded box fits and its area fraction lies in the scale range.
// Otherwise a centered box with the aspect clamped to the ratio range.
CropBox sample_crop_box(std::size_t height, std::size_t width, const CropParams& p, Rng& rng);

// Bilinear resample of `box` to out_h x out_w (half-pixel centers).
Image crop_resize(const Image& img, const CropBox& box, std::size_t out_h, std::size_t out_w);

LabeledImage random_resized_crop(const LabeledImage& img, std::size_t out_h, std::size_t out_w,
                                 const CropParams& p, Rng& rng);

Image horizontal_flip(const Image& img);

}  // namespace supmae::data
