#include "supmae/train/optim.hpp"

#include <cmath>

#include "supmae/error.hpp"

namespace supmae::train {

template <typename T>
void optimizer_step(model::ModelParams<T>& params, const diff::Gradients<T>& grads, OptState<T>& state,
                    double lr, const AdamWConfig& cfg, const LrScale& lr_scale) {
  for (const auto& [name, g] : grads.entries()) {
    for (auto x : g.data()) {
      if (!std::isfinite(x)) fail(ErrorCategory::numeric, "non-finite gradient for parameter '" + name + "'");
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads.entries()) {
    if (params.kind(name) != model::ParamKind::trainable) {
      fail(ErrorCategory::invariant, "optimizer received a gradient for non-trainable '" + name + "'");
    }
    auto& w = params.get_mut(name);
    auto it = state.moments.find(name);
    if (it == state.moments.end()) {
      it = state.moments.emplace(name, typename OptState<T>::Moments{diff::Tensor<T>(w.shape()), diff::Tensor<T>(w.shape())}).first;
    }
    auto& m = it->second.m;
    auto& v = it->second.v;
    const double step_lr = lr * (lr_scale ? lr_scale(name) : 1.0);
    const double decay = w.rank() >= 2 ? step_lr * cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      double wi = w[i];
      wi *= 1.0 - decay;
      wi -= step_lr * update;
      w[i] = static_cast<T>(wi);
    }
  }
}

template void optimizer_step<float>(model::ModelParams<float>&, const diff::Gradients<float>&, OptState<float>&,
                                    double, const AdamWConfig&, const LrScale&);
template void optimizer_step<double>(model::ModelParams<double>&, const diff::Gradients<double>&,
                                     OptState<double>&, double, const AdamWConfig&, const LrScale&);

}  // namespace supmae::train
