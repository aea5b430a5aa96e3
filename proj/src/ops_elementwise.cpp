#include <algorithm>
#include <cmath>
#include <numbers>

#include "dabformer/ops.hpp"
#include "op_util.hpp"

namespace dabformer {

using detail::finish;
using detail::ImplPtr;
using detail::wants_grad;

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b) + " (axis " + std::to_string(i) + ")");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` expressed over `out`'s index space; broadcast axes get 0.
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

// Calls fn(out_index, a_index, b_index) in row-major order over `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa,
                        const std::vector<int64_t>& sb, Fn&& fn) {
  const std::size_t rank = out.size();
  const int64_t n = shape_numel(out);
  if (n == 0) return;
  std::vector<int64_t> idx(rank, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t k = rank; k-- > 0;) {
      ++idx[k];
      ia += sa[k];
      ib += sb[k];
      if (idx[k] < out[k]) break;
      ia -= sa[k] * out[k];
      ib -= sb[k] * out[k];
      idx[k] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

double apply(BinOp op, double a, double b) {
  switch (op) {
    case BinOp::kAdd: return a + b;
    case BinOp::kSub: return a - b;
    case BinOp::kMul: return a * b;
    case BinOp::kDiv: return a / b;
  }
  return 0.0;
}

const char* op_name(BinOp op) {
  switch (op) {
    case BinOp::kAdd: return "add";
    case BinOp::kSub: return "sub";
    case BinOp::kMul: return "mul";
    case BinOp::kDiv: return "div";
  }
  return "?";
}

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  const char* name = op_name(op);
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(name) + ": undefined operand");
  const bool same = a.shape() == b.shape();
  const Shape out_shape = same ? a.shape() : broadcast_shape(a.shape(), b.shape(), name);
  Tensor out(out_shape);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  std::vector<int64_t> sa, sb;
  if (same) {
    const std::size_t n = o.size();
    switch (op) {
      case BinOp::kAdd: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[i]; break;
      case BinOp::kSub: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - y[i]; break;
      case BinOp::kMul: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * y[i]; break;
      case BinOp::kDiv: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] / y[i]; break;
    }
  } else {
    sa = broadcast_strides(a.shape(), out_shape);
    sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
      o[i] = apply(op, x[ia], y[ib]);
    });
  }
  if (autograd::any_requires_grad({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    autograd::record({out}, [ai, bi, oi, op, same, sa, sb, out_shape] {
      const auto& g = oi->grad;
      const auto& xa = ai->data;
      const auto& xb = bi->data;
      const bool ga_on = wants_grad(ai), gb_on = wants_grad(bi);
      std::span<double> ga, gb;
      if (ga_on) ga = autograd::grad_buffer(ai);
      if (gb_on) gb = autograd::grad_buffer(bi);
      auto body = [&](int64_t i, int64_t ia, int64_t ib) {
        const double gi = g[i];
        switch (op) {
          case BinOp::kAdd:
            if (ga_on) ga[ia] += gi;
            if (gb_on) gb[ib] += gi;
            break;
          case BinOp::kSub:
            if (ga_on) ga[ia] += gi;
            if (gb_on) gb[ib] -= gi;
            break;
          case BinOp::kMul:
            if (ga_on) ga[ia] += gi * xb[ib];
            if (gb_on) gb[ib] += gi * xa[ia];
            break;
          case BinOp::kDiv:
            if (ga_on) ga[ia] += gi / xb[ib];
            if (gb_on) gb[ib] -= gi * xa[ia] / (xb[ib] * xb[ib]);
            break;
        }
      };
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) body(i, i, i);
      } else {
        for_each_broadcast(out_shape, sa, sb, body);
      }
    });
  }
  return finish(std::move(out), name);
}

// Elementwise unary op; `deriv(x, y)` gives dy/dx.
template <typename F, typename D>
Tensor unary(const Tensor& x, const char* name, F f, D deriv) {
  if (!x.defined()) throw ShapeError(std::string(name) + ": undefined operand");
  Tensor out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oi = out.impl();
    autograd::record({out}, [xi, oi, deriv] {
      auto gx = autograd::grad_buffer(xi);
      const auto& g = oi->grad;
      const auto& xv = xi->data;
      const auto& yv = oi->data;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  }
  return finish(std::move(out), name);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oi = out.impl();
    autograd::record({out}, [xi, oi] {
      auto gx = autograd::grad_buffer(xi);
      const double g = oi->grad[0];
      for (double& v : gx) v += g;
    });
  }
  return finish(std::move(out), "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor l2_norm(const Tensor& x) { return sqrt(sum(square(x))); }

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const Shape merged = broadcast_shape(x.shape(), shape, "broadcast_to");
  if (merged != shape) {
    throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " does not expand to " +
                     shape_str(shape));
  }
  Tensor out(shape);
  const auto sx = broadcast_strides(x.shape(), shape);
  const std::vector<int64_t> none(shape.size(), 0);
  auto o = out.data();
  auto in = x.data();
  for_each_broadcast(shape, sx, none, [&](int64_t i, int64_t ix, int64_t) { o[i] = in[ix]; });
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oi = out.impl();
    autograd::record({out}, [xi, oi, sx, none, shape] {
      auto gx = autograd::grad_buffer(xi);
      const auto& g = oi->grad;
      for_each_broadcast(shape, sx, none, [&](int64_t i, int64_t ix, int64_t) { gx[ix] += g[i]; });
    });
  }
  return out;
}

}  // namespace dabformer
