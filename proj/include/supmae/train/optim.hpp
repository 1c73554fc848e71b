#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "supmae/diff/graph.hpp"
#include "supmae/model/params.hpp"

namespace supmae::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

template <typename T>
struct OptState {
  struct Moments {
    diff::Tensor<T> m;
    diff::Tensor<T> v;
  };
  std::map<std::string, Moments> moments;
  std::uint64_t step = 0;

  friend bool operator==(const OptState& a, const OptState& b) {
    if (a.step != b.step || a.moments.size() != b.moments.size()) return false;
    for (auto ia = a.moments.begin(), ib = b.moments.begin(); ia != a.moments.end(); ++ia, ++ib) {
      if (ia->first != ib->first || !diff::bitwise_equal(ia->second.m, ib->second.m) ||
          !diff::bitwise_equal(ia->second.v, ib->second.v)) {
        return false;
      }
    }
    return true;
  }
};

// Per-parameter lr multiplier (layer-wise decay); empty means 1 everywhere.
using LrScale = std::function<double(const std::string&)>;

// One bias-corrected AdamW step over every parameter in `grads`. Decay is
// decoupled: w -= lr * scale * wd * w, for matrices only.
template <typename T>
void optimizer_step(model::ModelParams<T>& params, const diff::Gradients<T>& grads, OptState<T>& state,
                    double lr, const AdamWConfig& cfg, const LrScale& lr_scale = {});

}  // namespace supmae::train
