#include "supmae/data/toyset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace supmae::data {
namespace {

// Coverage in [0, 1] of shape `cls` at offset (dx, dy) from its center,
// for half-size r. Edges are softened over one pixel.
double coverage(int cls, double dx, double dy, double r) {
  auto soft = [](double d) { return std::clamp(0.5 - d, 0.0, 1.0); };
  const double ax = std::abs(dx), ay = std::abs(dy);
  const double rad = std::hypot(dx, dy);
  const double w = std::max(1.5, 0.3 * r);
  switch (cls) {
    case 0: return soft(rad - r);                                                   // disk
    case 1: return soft(std::max(ax, ay) - r);                                      // square
    case 2: return soft(std::abs(rad - 0.75 * r) - 0.5 * w);                        // ring
    case 3: return soft(std::abs(std::max(ax, ay) - 0.8 * r) - 0.5 * w);            // hollow square
    case 4: return std::max(soft(std::max(ax - 0.5 * w, ay - r)), soft(std::max(ay - 0.5 * w, ax - r)));  // plus
    case 5: {                                                                       // diagonal cross
      const double u = std::abs(dx + dy) / std::numbers::sqrt2, v = std::abs(dx - dy) / std::numbers::sqrt2;
      return std::max(soft(std::max(u - 0.5 * w, v - r)), soft(std::max(v - 0.5 * w, u - r)));
    }
    case 6: return soft(std::max(std::abs(ay - 0.6 * r) - 0.5 * w, ax - r));         // two horizontal bars
    case 7: return soft(std::max(std::abs(ax - 0.6 * r) - 0.5 * w, ay - r));         // two vertical bars
    case 8: {                                                                       // triangle, apex up
      const double h = 2.0 * r;
      const double t = (dy + r) / h;  // 0 at apex row, 1 at base
      if (dy > r || dy < -r) return soft(ay - r);
      return soft(ax - t * r);
    }
    default: {                                                                      // checker of 2x2 blocks
      const bool inside = std::max(ax, ay) <= r;
      if (!inside) return soft(std::max(ax, ay) - r);
      return (dx < 0) == (dy < 0) ? 1.0 : 0.0;
    }
  }
}

}  // namespace

Image render_toy(int cls, const ToySpec& spec, Rng& rng) {
  const std::size_t s = spec.size;
  const double sd = static_cast<double>(s);
  Image img(s, s, 1);
  const double base = rng.uniform(0.3, 0.7);
  // Two random plane waves at low frequency.
  double fx[2], fy[2], ph[2], amp[2];
  for (int k = 0; k < 2; ++k) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double freq = rng.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / sd;
    fx[k] = freq * std::cos(angle);
    fy[k] = freq * std::sin(angle);
    ph[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    amp[k] = spec.background * rng.uniform(0.5, 1.0);
  }
  const double r = rng.uniform(0.16, 0.28) * sd;
  const double cx = rng.uniform(r + 1.0, sd - r - 1.0);
  const double cy = rng.uniform(r + 1.0, sd - r - 1.0);
  const double contrast = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.25, 0.45);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double v = base;
      for (int k = 0; k < 2; ++k) v += amp[k] * std::sin(fx[k] * px + fy[k] * py + ph[k]);
      v += contrast * coverage(cls, px - cx, py - cy, r);
      v += spec.noise * rng.normal();
      img.at(y, x, 0) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return img;
}

ToySplit make_toy_dataset(const ToySpec& spec) {
  ToySplit out;
  out.train.num_classes = kToyClasses;
  out.test.num_classes = kToyClasses;
  auto fill = [&spec](Dataset& ds, std::size_t n, std::uint64_t split) {
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % kToyClasses);
      Rng rng = Rng::derive(spec.seed, Stream::toydata, {split, i});
      ds.samples.push_back({render_toy(cls, spec, rng), cls});
    }
  };
  fill(out.train, spec.train, 0);
  fill(out.test, spec.test, 1);
  return out;
}

}  // namespace supmae::data
