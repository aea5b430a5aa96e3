#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dabformer/tensor.hpp"

namespace dabformer {

// Insertion-ordered registry of learnable tensors.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  // Registers `value` under a unique name and marks it as requiring grad.
  Tensor add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  // Copies values from `other`; names and shapes must match exactly.
  void assign_from(const ParamStore& other);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

int64_t param_count(const ParamStore& params);

}  // namespace dabformer
