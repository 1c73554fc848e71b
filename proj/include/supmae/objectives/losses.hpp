#pragma once

#include <cstdint>
#include <vector>

#include "supmae/data/mask.hpp"
#include "supmae/diff/graph.hpp"
#include "supmae/diff/tensor.hpp"

namespace supmae::objectives {

inline constexpr double kNormPixEps = 1e-6;

struct LossWeights {
  double lambda_rec = 1.0;
  double lambda_cls = 0.01;
  double tau = 10.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Per-patch standardization over the last axis, biased variance. The result
// is a plain tensor so nothing flows back through it.
template <typename T>
diff::Tensor<T> norm_pix_targets(const diff::Tensor<T>& masked_pixels, double eps = kNormPixEps);

// Mean over masked patches x pixels x batch; targets are aligned to each
// plan's masked_idx.
template <typename T>
diff::Var<T> reconstruction_loss(diff::Var<T> pred, const diff::Tensor<T>& targets,
                                 const std::vector<data::MaskPlan>& plans);

template <typename T>
diff::Var<T> classification_loss(diff::Var<T> logits, const std::vector<int>& labels, double tau,
                                 double label_smoothing = 0.0);

template <typename T>
struct JointLoss {
  diff::Var<T> total;
  double rec = 0;
  double cls = 0;
};

// lambda_rec * rec + lambda_cls * cls. `last_good_step` is reported if
// either addend is not finite.
template <typename T>
JointLoss<T> joint_loss(diff::Var<T> rec, diff::Var<T> cls, const LossWeights& w,
                        std::int64_t last_good_step = -1);

}  // namespace supmae::objectives
