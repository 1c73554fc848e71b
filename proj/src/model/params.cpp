#include "supmae/model/params.hpp"

#include <cstring>

#include "supmae/error.hpp"

namespace supmae::model {

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

bool is_encoder_param(const std::string& n) {
  return starts_with(n, "patch_embed.") || n == "cls_token" || n == "pos_embed" ||
         starts_with(n, "blocks.") || starts_with(n, "norm.");
}

bool is_decoder_param(const std::string& n) {
  return starts_with(n, "decoder_") || n == "mask_token";
}

bool is_pretrain_head_param(const std::string& n) { return starts_with(n, "head."); }

template <typename T>
void ModelParams<T>::add(std::string name, diff::Tensor<T> value, ParamKind kind) {
  if (index_.count(name)) fail(ErrorCategory::usage, "duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value), kind});
}

template <typename T>
void ModelParams<T>::set(const std::string& name, diff::Tensor<T> value) {
  auto& cur = get_mut(name);
  if (cur.shape() != value.shape()) {
    fail(ErrorCategory::dimension, "parameter '" + name + "' has shape " + diff::shape_str(cur.shape()) +
                                       ", cannot assign " + diff::shape_str(value.shape()));
  }
  cur = std::move(value);
}

template <typename T>
void ModelParams<T>::erase_if(const std::function<bool(const std::string&)>& pred) {
  std::vector<Entry> kept;
  for (auto& e : entries_)
    if (!pred(e.name)) kept.push_back(std::move(e));
  entries_ = std::move(kept);
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].name, i);
}

template <typename T>
const diff::Tensor<T>& ModelParams<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCategory::load, "missing parameter '" + name + "'");
  return entries_[it->second].value;
}

template <typename T>
diff::Tensor<T>& ModelParams<T>::get_mut(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCategory::load, "missing parameter '" + name + "'");
  return entries_[it->second].value;
}

template <typename T>
ParamKind ModelParams<T>::kind(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCategory::load, "missing parameter '" + name + "'");
  return entries_[it->second].kind;
}

template <typename T>
std::vector<std::string> ModelParams<T>::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

template <typename T>
std::size_t ModelParams<T>::count_scalars(ParamKind kind) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.kind == kind) n += e.value.size();
  return n;
}

template <typename T>
std::uint64_t ModelParams<T>::checksum(const std::function<bool(const std::string&)>& pred) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : entries_) {
    if (!pred(e.name)) continue;
    mix(e.name.data(), e.name.size());
    mix(e.value.data().data(), e.value.size() * sizeof(T));
  }
  return h;
}

template <typename T>
ParamBinding<T>::ParamBinding(diff::Graph<T>& graph, const ModelParams<T>& params, const Select& trainable)
    : graph_(&graph), params_(&params) {
  for (const auto& e : params.entries()) {
    if (e.kind == ParamKind::trainable && trainable(e.name)) vars_.emplace(e.name, graph.leaf(e.name, e.value));
  }
}

template <typename T>
ParamBinding<T>::ParamBinding(diff::Graph<T>& graph, const ModelParams<T>& params,
                              const diff::Leaves<T>& leaves)
    : graph_(&graph), params_(&params), vars_(leaves) {}

template <typename T>
diff::Var<T> ParamBinding<T>::var(const std::string& name) const {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  auto v = graph_->constant(params_->get(name));
  vars_.emplace(name, v);
  return v;
}

template class ModelParams<float>;
template class ModelParams<double>;
template class ParamBinding<float>;
template class ParamBinding<double>;
template class ModelParams<long double>;
template class ParamBinding<long double>;

}  // namespace supmae::model
