#include "supmae/data/patch.hpp"

#include "supmae/error.hpp"

namespace supmae::data {

PatchGrid patchify(const Image& img, std::size_t patch_size) {
  if (patch_size == 0 || img.height % patch_size != 0 || img.width % patch_size != 0) {
    fail(ErrorCategory::geometry, "image " + std::to_string(img.height) + "x" +
                                      std::to_string(img.width) + " is not divisible by patch size " +
                                      std::to_string(patch_size));
  }
  PatchGrid g;
  g.grid_h = img.height / patch_size;
  g.grid_w = img.width / patch_size;
  g.patch_size = patch_size;
  g.channels = img.channels;
  g.patches.resize(img.pixels.size());
  const std::size_t p = patch_size, c = img.channels;
  for (std::size_t gy = 0; gy < g.grid_h; ++gy)
    for (std::size_t gx = 0; gx < g.grid_w; ++gx) {
      float* dst = g.patch(gy * g.grid_w + gx);
      for (std::size_t py = 0; py < p; ++py)
        for (std::size_t px = 0; px < p; ++px)
          for (std::size_t ch = 0; ch < c; ++ch)
            dst[(py * p + px) * c + ch] = img.at(gy * p + py, gx * p + px, ch);
    }
  return g;
}

Image depatchify(const PatchGrid& g) {
  const std::size_t p = g.patch_size, c = g.channels;
  if (g.patches.size() != g.num_patches() * g.patch_dim()) {
    fail(ErrorCategory::geometry, "patch grid payload does not match its geometry");
  }
  Image img(g.grid_h * p, g.grid_w * p, c);
  for (std::size_t gy = 0; gy < g.grid_h; ++gy)
    for (std::size_t gx = 0; gx < g.grid_w; ++gx) {
      const float* src = g.patch(gy * g.grid_w + gx);
      for (std::size_t py = 0; py < p; ++py)
        for (std::size_t px = 0; px < p; ++px)
          for (std::size_t ch = 0; ch < c; ++ch)
            img.at(gy * p + py, gx * p + px, ch) = src[(py * p + px) * c + ch];
    }
  return img;
}

}  // namespace supmae::data
