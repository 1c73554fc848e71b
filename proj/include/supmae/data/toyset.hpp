#pragma once

#include <cstddef>
#include <cstdint>

#include "supmae/data/image.hpp"
#include "supmae/rng.hpp"

namespace supmae::data {

// Synthetic 10-class shape images for desk-scale experiments: one small
// shape per image (class = shape kind) at a random position, size and
// contrast, over a smooth random background with pixel noise.
struct ToySpec {
  std::size_t train = 2000;
  std::size_t test = 500;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  // Amplitude of the low-frequency background pattern.
  double background = 0.25;
  double noise = 0.04;

  friend bool operator==(const ToySpec&, const ToySpec&) = default;
};

inline constexpr int kToyClasses = 10;

struct ToySplit {
  Dataset train;
  Dataset test;
};

Image render_toy(int cls, const ToySpec& spec, Rng& rng);

// Balanced labels (i mod 10), each image drawn from its own stream.
ToySplit make_toy_dataset(const ToySpec& spec);

}  // namespace supmae::data
