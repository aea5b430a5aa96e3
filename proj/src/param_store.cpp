#include "dabformer/param_store.hpp"

#include <algorithm>

namespace dabformer {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (name.empty()) throw Error("ParamStore: empty parameter name");
  if (contains(name)) throw Error("ParamStore: duplicate parameter '" + name + "'");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, value);
  return value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamStore: no parameter named '" + name + "'");
  return entries_[it->second].second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

void ParamStore::assign_from(const ParamStore& other) {
  if (other.size() != size()) {
    throw Error("ParamStore: expected " + std::to_string(size()) + " tensors, got " +
                std::to_string(other.size()));
  }
  for (auto& [name, t] : entries_) {
    if (!other.contains(name)) throw Error("ParamStore: missing tensor '" + name + "'");
    const Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("ParamStore: shape mismatch for '" + name + "': stored " +
                       shape_str(src.shape()) + ", expected " + shape_str(t.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
  }
}

int64_t param_count(const ParamStore& params) {
  int64_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace dabformer
