#include "dabformer/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dabformer {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  autograd::NoGradGuard guard;
  const double v = f().item();
  if (!std::isfinite(v)) throw NonFiniteError("grad_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor x,
                           const GradCheckOptions& options) {
  const bool had_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  autograd::clear_tape();
  {
    Tensor y = f();
    if (!std::isfinite(y.item())) throw NonFiniteError("grad_check: objective is not finite");
    autograd::backward(y);
  }
  const std::vector<double> analytic = x.has_grad()
                                           ? std::vector<double>(x.grad().begin(), x.grad().end())
                                           : std::vector<double>(x.numel(), 0.0);
  x.zero_grad();
  x.set_requires_grad(had_flag);

  const int64_t n = x.numel();
  const int64_t stride =
      options.max_elements > 0 ? std::max<int64_t>(1, (n + options.max_elements - 1) / options.max_elements)
                               : 1;
  GradCheckReport report;
  auto data = x.data();
  for (int64_t i = 0; i < n; i += stride) {
    const double saved = data[i];
    data[i] = saved + options.step;
    const double fp = eval_scalar(f);
    data[i] = saved - options.step;
    const double fm = eval_scalar(f);
    data[i] = saved;
    const double numeric = (fp - fm) / (2.0 * options.step);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double abs_err = std::abs(a - numeric);
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double rel = abs_err / denom;
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.worst_index = i;
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace dabformer
