#pragma once

#include <cstdint>

#include "supmae/diff/gradcheck.hpp"

namespace supmae::train {

// Finite-difference check of the joint pre-training loss with respect to
// every trainable tensor, at 64-bit on a fixed toy problem: 16x16x1 images,
// P=4, d=32, depth 2, one decoder block, batch 2, mask ratio 0.75.
diff::GradCheckReport full_loss_gradcheck(std::uint64_t seed = 7, double tol = 1e-4, double step = 1e-5);

}  // namespace supmae::train
