#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "supmae/diff/tensor.hpp"
#include "supmae/error.hpp"

namespace supmae::diff {

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  bool valid() const noexcept { return graph != nullptr; }
  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
};

// Gradients of every leaf, in leaf-creation order. Leaves the loss never
// touched hold exact zeros.
template <typename T>
class Gradients {
 public:
  void add(std::string name, Tensor<T> grad) {
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(grad));
  }

  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      fail(ErrorCategory::usage, "no gradient for '" + name + "': not a leaf of this graph");
    }
    return entries_[it->second].second;
  }

  // Elementwise sum with gradients over the same leaves.
  void accumulate(const Gradients& other) {
    if (entries_.empty()) {
      *this = other;
      return;
    }
    for (const auto& [name, g] : other.entries_) {
      auto it = index_.find(name);
      if (it == index_.end()) fail(ErrorCategory::usage, "accumulate: unknown gradient '" + name + "'");
      auto& dst = entries_[it->second].second;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const noexcept {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

enum class GradMode { enabled, disabled };

// Append-only tape. Node ids are a topological order by construction, so the
// backward sweep simply walks ids in descending order.
template <typename T>
class Graph {
 public:
  // Receives the gradient of the node's output and accumulates into its inputs
  // through Graph::grad_buffer.
  using BackwardFn = std::function<void(std::span<const T> grad_out, Graph& graph)>;

  struct Node {
    const char* op = "";
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    BackwardFn backward;
    std::string leaf_name;
    bool is_leaf = false;
    bool requires_grad = false;
  };

  explicit Graph(GradMode mode = GradMode::enabled) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return mode_ == GradMode::enabled; }

  Var<T> leaf(std::string name, Tensor<T> value) {
    if (leaf_ids_.count(name)) fail(ErrorCategory::usage, "duplicate leaf name '" + name + "'");
    Node n;
    n.op = "leaf";
    n.value = std::move(value);
    n.is_leaf = true;
    n.requires_grad = grad_enabled();
    n.leaf_name = name;
    leaf_ids_.emplace(std::move(name), nodes_.size());
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<T> constant(Tensor<T> value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  // Records an op output. `backward` is dropped when no input needs a gradient.
  Var<T> record(const char* op, std::vector<std::size_t> inputs, Tensor<T> value,
                BackwardFn backward) {
    for (auto v : value.data()) {
      if (!std::isfinite(v)) {
        fail(ErrorCategory::numeric, std::string("non-finite value produced by op '") + op +
                                         "' (output shape " + shape_str(value.shape()) + ")");
      }
    }
    Node n;
    n.op = op;
    bool needs = false;
    for (auto id : inputs) {
      if (id >= nodes_.size()) fail(ErrorCategory::usage, "op input refers to a future node");
      needs = needs || nodes_[id].requires_grad;
    }
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  // Writable gradient accumulator for `id`; only meaningful inside backward().
  std::span<T> grad_buffer(std::size_t id) {
    auto& g = grads_[id];
    if (g.empty()) g.assign(nodes_[id].value.size(), T{0});
    return g;
  }

  // Seeds d(loss)/d(loss) = 1 for a single-element output.
  Gradients<T> backward(Var<T> loss) {
    if (loss.graph != this) fail(ErrorCategory::usage, "loss belongs to another graph");
    if (value(loss.id).size() != 1) {
      fail(ErrorCategory::usage, "backward(loss) needs a scalar, got shape " +
                                     shape_str(value(loss.id).shape()) + "; pass seed gradients");
    }
    std::vector<std::pair<Var<T>, Tensor<T>>> seeds;
    seeds.emplace_back(loss, Tensor<T>::filled(value(loss.id).shape(), T{1}));
    return backward(seeds);
  }

  Gradients<T> backward(std::span<const std::pair<Var<T>, Tensor<T>>> seeds) {
    if (!grad_enabled()) fail(ErrorCategory::usage, "backward on a graph built without gradients");
    grads_.assign(nodes_.size(), {});
    std::size_t top = 0;
    for (const auto& [var, seed] : seeds) {
      if (var.graph != this) fail(ErrorCategory::usage, "seed belongs to another graph");
      if (seed.shape() != value(var.id).shape()) {
        fail(ErrorCategory::dimension, "seed shape " + shape_str(seed.shape()) +
                                           " does not match output " +
                                           shape_str(value(var.id).shape()));
      }
      auto buf = grad_buffer(var.id);
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += seed[i];
      top = std::max(top, var.id + 1);
    }
    for (std::size_t id = top; id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.backward || grads_[id].empty()) continue;
      n.backward(std::span<const T>(grads_[id]), *this);
    }
    Gradients<T> out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const auto& n = nodes_[id];
      if (!n.is_leaf) continue;
      if (grads_[id].empty()) {
        out.add(n.leaf_name, Tensor<T>(n.value.shape()));
      } else {
        out.add(n.leaf_name, Tensor<T>(n.value.shape(), std::move(grads_[id])));
      }
    }
    grads_.clear();
    return out;
  }

  // Leaf lookup by name, e.g. to fetch a leaf's gradient from a report.
  Var<T> leaf_var(const std::string& name) {
    auto it = leaf_ids_.find(name);
    if (it == leaf_ids_.end()) fail(ErrorCategory::usage, "'" + name + "' is not a leaf");
    return {this, it->second};
  }

  // The name under which `v` reports its gradient; non-leaves have none.
  const std::string& leaf_name(Var<T> v) const {
    const auto& n = nodes_.at(v.id);
    if (!n.is_leaf) {
      fail(ErrorCategory::usage, std::string("gradient requested for non-leaf node (op '") +
                                     n.op + "')");
    }
    return n.leaf_name;
  }

 private:
  GradMode mode_;
  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::map<std::string, std::size_t> leaf_ids_;
};

}  // namespace supmae::diff
