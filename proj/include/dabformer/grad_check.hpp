#pragma once

#include <cstdint>
#include <functional>

#include "dabformer/tensor.hpp"

namespace dabformer {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so entries whose true gradient
  // is ~0 are judged on absolute error instead.
  double floor = 1e-8;
  // Check at most this many (evenly strided) elements; <= 0 checks all.
  int64_t max_elements = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  int64_t worst_index = -1;
  int64_t checked = 0;
  bool passed = false;
};

// Compares the reverse-mode gradient of scalar `f` w.r.t. `x` against central
// differences (f(x+h e_i) - f(x-h e_i)) / 2h. `f` must read `x` (by handle)
// and be deterministic. Throws NonFiniteError if f is not finite.
GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor x,
                           const GradCheckOptions& options = {});

}  // namespace dabformer
