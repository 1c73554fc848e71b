#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "supmae/diff/graph.hpp"
#include "supmae/diff/tensor.hpp"

namespace supmae::diff {

template <typename T>
using Leaves = std::map<std::string, Var<T>>;

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

// Builds a scalar loss from the leaves grad_check binds for each parameter.
using LossBuilder = std::function<Var<double>(Graph<double>&, const Leaves<double>&)>;

// The same loss built at extended precision.
using ExtendedLossBuilder = std::function<Var<long double>(Graph<long double>&, const Leaves<long double>&)>;

struct ParamCheck {
  std::string name;
  Shape shape;
  std::size_t checked = 0;
  std::size_t refined = 0;
  double max_rel_err = 0;
  std::size_t worst_index = 0;
  double analytic = 0;  // at worst_index
  double numeric = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double tol = 0;
  double step = 0;
  double loss = 0;

  bool passed() const;
  double max_rel_err() const;
  std::string table() const;
};

struct GradCheckOptions {
  // 0 checks every entry; otherwise a seeded subset of this size per tensor,
  // always including the entry with the largest analytic gradient.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t subset_seed = 0;
  // When set, entries whose 64-bit difference quotient disagrees by more than
  // refine_fraction * tol are re-differenced at extended precision, where the
  // rounding noise of the loss is ~2000x smaller.
  ExtendedLossBuilder refine;
  double refine_fraction = 0.25;
};

// |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
double relative_error(double analytic, double numeric);

// Central-difference check of every parameter's analytic gradient.
GradCheckReport grad_check(const LossBuilder& f, const NamedTensors<double>& params, double step,
                           double tol, const GradCheckOptions& options = {});

}  // namespace supmae::diff
