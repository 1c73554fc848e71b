#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "supmae/diff/graph.hpp"
#include "supmae/diff/gradcheck.hpp"
#include "supmae/diff/tensor.hpp"
#include "supmae/model/config.hpp"

namespace supmae::model {

enum class ParamKind : std::uint8_t {
  trainable,
  frozen,  // constant tables, never updated
  buffer,  // running statistics, updated outside the optimizer
};

// Ordered store of named tensors. Names follow a dotted module path
// ("blocks.0.attn.qkv.weight").
template <typename T>
class ModelParams {
 public:
  struct Entry {
    std::string name;
    diff::Tensor<T> value;
    ParamKind kind = ParamKind::trainable;
  };

  void add(std::string name, diff::Tensor<T> value, ParamKind kind = ParamKind::trainable);
  void set(const std::string& name, diff::Tensor<T> value);
  void erase_if(const std::function<bool(const std::string&)>& pred);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const diff::Tensor<T>& get(const std::string& name) const;
  diff::Tensor<T>& get_mut(const std::string& name);
  ParamKind kind(const std::string& name) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<std::string> names() const;
  std::size_t count_scalars(ParamKind kind) const;

  // FNV-1a over names and raw bytes of entries whose name passes `pred`.
  std::uint64_t checksum(const std::function<bool(const std::string&)>& pred) const;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.kind);
    return out;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.kind != y.kind || !diff::bitwise_equal(x.value, y.value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Name predicates shared by optimizer, probing and checkpoint subset loads.
bool is_encoder_param(const std::string& name);
bool is_decoder_param(const std::string& name);
bool is_pretrain_head_param(const std::string& name);

// Decoupled weight decay applies to trainable matrices only (not norms,
// biases, mask or class tokens).
template <typename T>
bool decays(const typename ModelParams<T>::Entry& e) {
  return e.kind == ParamKind::trainable && e.value.rank() >= 2;
}

// Resolves parameter names to graph variables for one forward pass.
// Parameters selected as trainable become gradient leaves; everything else
// enters the graph as a constant.
template <typename T>
class ParamBinding {
 public:
  using Select = std::function<bool(const std::string&)>;

  ParamBinding(diff::Graph<T>& graph, const ModelParams<T>& params, const Select& trainable);
  // Uses caller-created leaves (gradient checking); others become constants.
  ParamBinding(diff::Graph<T>& graph, const ModelParams<T>& params, const diff::Leaves<T>& leaves);

  diff::Var<T> var(const std::string& name) const;
  const diff::Tensor<T>& tensor(const std::string& name) const { return params_->get(name); }
  bool contains(const std::string& name) const { return params_->contains(name); }
  diff::Graph<T>& graph() const { return *graph_; }
  const ModelParams<T>& params() const { return *params_; }

 private:
  diff::Graph<T>* graph_;
  const ModelParams<T>* params_;
  mutable std::map<std::string, diff::Var<T>> vars_;
};

// Trainable parameters go to the optimizer; frozen tables and buffers do not.
template <typename T>
bool all_trainable(const ModelParams<T>& p, const std::string& name) {
  return p.kind(name) == ParamKind::trainable;
}

}  // namespace supmae::model
