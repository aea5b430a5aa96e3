#pragma once

#include <string>

#include "dabformer/tensor.hpp"

namespace dabformer::detail {

using ImplPtr = std::shared_ptr<TensorImpl>;

inline void require_rank(const Tensor& t, int rank, const char* op, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": " + what + " is undefined");
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Accumulates into an input's grad only when that input participates.
inline bool wants_grad(const ImplPtr& t) { return t && t->requires_grad; }

inline Tensor finish(Tensor out, const char* op) {
  check_finite(out.data(), op);
  return out;
}

}  // namespace dabformer::detail
