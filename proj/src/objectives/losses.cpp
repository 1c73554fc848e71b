#include "supmae/objectives/losses.hpp"

#include <cmath>
#include <string>

#include "supmae/diff/ops.hpp"
#include "supmae/error.hpp"

namespace supmae::objectives {

using diff::Tensor;
using diff::Var;

void LossWeights::validate() const {
  if (!(lambda_rec >= 0) || !(lambda_cls >= 0)) fail(ErrorCategory::config, "loss weights must be nonnegative");
  if (lambda_rec == 0 && lambda_cls == 0) fail(ErrorCategory::config, "lambda_rec and lambda_cls cannot both be 0");
  if (!(tau > 0)) fail(ErrorCategory::config, "tau must be positive");
}

template <typename T>
Tensor<T> norm_pix_targets(const Tensor<T>& x, double eps) {
  if (x.rank() == 0 || x.size() == 0) fail(ErrorCategory::contract, "norm_pix_targets: empty input");
  const std::size_t k = x.last_dim();
  const std::size_t rows = x.size() / k;
  Tensor<T> out(x.shape());
  const T* src = x.data().data();
  T* dst = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = src + r * k;
    double mean = 0;
    for (std::size_t i = 0; i < k; ++i) mean += p[i];
    mean /= static_cast<double>(k);
    double var = 0;
    for (std::size_t i = 0; i < k; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(k);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < k; ++i) dst[r * k + i] = static_cast<T>((p[i] - mean) * inv);
  }
  return out;
}

template <typename T>
Var<T> reconstruction_loss(Var<T> pred, const Tensor<T>& targets, const std::vector<data::MaskPlan>& plans) {
  const auto& ps = pred.shape();
  if (ps.size() != 3 || targets.rank() != 3 || plans.size() != ps[0] || targets.dim(0) != ps[0]) {
    fail(ErrorCategory::contract, "reconstruction_loss: pred " + diff::shape_str(ps) + ", targets " +
                                      diff::shape_str(targets.shape()) + ", " + std::to_string(plans.size()) +
                                      " plans do not line up");
  }
  std::vector<std::vector<std::size_t>> masked;
  masked.reserve(plans.size());
  for (const auto& plan : plans) {
    if (plan.num_patches != ps[1] || plan.num_masked() != targets.dim(1)) {
      fail(ErrorCategory::contract, "reconstruction_loss: targets are not aligned to the mask plan");
    }
    masked.push_back(plan.masked_idx);
  }
  return diff::masked_mse(pred, targets, masked);
}

template <typename T>
Var<T> classification_loss(Var<T> logits, const std::vector<int>& labels, double tau, double label_smoothing) {
  if (!(tau > 0)) fail(ErrorCategory::config, "tau must be positive");
  return diff::cross_entropy(logits, labels, static_cast<T>(tau), static_cast<T>(label_smoothing));
}

template <typename T>
JointLoss<T> joint_loss(Var<T> rec, Var<T> cls, const LossWeights& w, std::int64_t last_good_step) {
  const double r = static_cast<double>(rec.value().item());
  const double c = static_cast<double>(cls.value().item());
  if (!std::isfinite(r) || !std::isfinite(c)) {
    fail(ErrorCategory::numeric, "non-finite loss (rec " + std::to_string(r) + ", cls " + std::to_string(c) +
                                     "); last good step " + std::to_string(last_good_step));
  }
  JointLoss<T> out;
  out.total = diff::add(diff::scale(rec, static_cast<T>(w.lambda_rec)), diff::scale(cls, static_cast<T>(w.lambda_cls)));
  out.rec = r;
  out.cls = c;
  return out;
}

#define SUPMAE_INSTANTIATE_LOSSES(T)                                                                   \
  template Tensor<T> norm_pix_targets<T>(const Tensor<T>&, double);                                  \
  template Var<T> reconstruction_loss<T>(Var<T>, const Tensor<T>&, const std::vector<data::MaskPlan>&); \
  template Var<T> classification_loss<T>(Var<T>, const std::vector<int>&, double, double);           \
  template JointLoss<T> joint_loss<T>(Var<T>, Var<T>, const LossWeights&, std::int64_t);

SUPMAE_INSTANTIATE_LOSSES(float)
SUPMAE_INSTANTIATE_LOSSES(double)
SUPMAE_INSTANTIATE_LOSSES(long double)

#undef SUPMAE_INSTANTIATE_LOSSES

}  // namespace supmae::objectives
