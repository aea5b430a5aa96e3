#include <cblas.h>

#include <algorithm>
#include <cstring>

#include "dabformer/ops.hpp"
#include "op_util.hpp"

namespace dabformer {

using detail::finish;
using detail::ImplPtr;
using detail::wants_grad;

namespace {

struct BatchedDims {
  int64_t batch = 1;
  Shape lead;
};

BatchedDims lead_dims(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank()) {
    throw ShapeError(std::string(op) + ": operands need equal rank >= 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  BatchedDims d;
  for (int i = 0; i < a.rank() - 2; ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError(std::string(op) + ": batch axis " + std::to_string(i) +
                       " differs: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    d.lead.push_back(a.dim(i));
    d.batch *= a.dim(i);
  }
  return d;
}

// C[m,n] += op(A) * op(B) for each batch slice.
void gemm_batched(bool ta, bool tb, int64_t batch, int64_t m, int64_t n, int64_t k,
                  const double* a, const double* b, double* c) {
  const int lda = static_cast<int>(ta ? m : k);
  const int ldb = static_cast<int>(tb ? k : n);
  for (int64_t i = 0; i < batch; ++i) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0,
                a + i * m * k, lda, b + i * k * n, ldb, 1.0, c + i * m * n,
                static_cast<int>(n));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const BatchedDims d = lead_dims(a, b, "matmul");
  const int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul: inner extents differ (" + std::to_string(k) + " vs " +
                     std::to_string(b.dim(-2)) + ")");
  }
  Shape shape = d.lead;
  shape.push_back(m);
  shape.push_back(n);
  Tensor out(shape);
  gemm_batched(false, false, d.batch, m, n, k, a.data().data(), b.data().data(),
               out.data().data());
  if (autograd::any_requires_grad({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    const int64_t batch = d.batch;
    autograd::record({out}, [ai, bi, oi, batch, m, n, k] {
      const double* g = oi->grad.data();
      if (wants_grad(ai)) {
        // dA = dC * B^T
        gemm_batched(false, true, batch, m, k, n, g, bi->data.data(),
                     autograd::grad_buffer(ai).data());
      }
      if (wants_grad(bi)) {
        // dB = A^T * dC
        gemm_batched(true, false, batch, k, n, m, ai->data.data(), g,
                     autograd::grad_buffer(bi).data());
      }
    });
  }
  return finish(std::move(out), "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const BatchedDims d = lead_dims(a, b, "matmul_nt");
  const int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-2);
  if (b.dim(-1) != k) {
    throw ShapeError("matmul_nt: inner extents differ (" + std::to_string(k) + " vs " +
                     std::to_string(b.dim(-1)) + ")");
  }
  Shape shape = d.lead;
  shape.push_back(m);
  shape.push_back(n);
  Tensor out(shape);
  gemm_batched(false, true, d.batch, m, n, k, a.data().data(), b.data().data(),
               out.data().data());
  if (autograd::any_requires_grad({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    const int64_t batch = d.batch;
    autograd::record({out}, [ai, bi, oi, batch, m, n, k] {
      const double* g = oi->grad.data();
      if (wants_grad(ai)) {
        // dA = dC * B
        gemm_batched(false, false, batch, m, k, n, g, bi->data.data(),
                     autograd::grad_buffer(ai).data());
      }
      if (wants_grad(bi)) {
        // dB = dC^T * A
        gemm_batched(true, false, batch, n, k, m, g, ai->data.data(),
                     autograd::grad_buffer(bi).data());
      }
    });
  }
  return finish(std::move(out), "matmul_nt");
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose: rank must be >= 2, got " + shape_str(x.shape()));
  const int64_t r = x.dim(-2), c = x.dim(-1);
  const int64_t batch = x.numel() / std::max<int64_t>(1, r * c);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Tensor out(shape);
  auto in = x.data();
  auto o = out.data();
  for (int64_t bi = 0; bi < batch; ++bi) {
    const double* src = in.data() + bi * r * c;
    double* dst = o.data() + bi * r * c;
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oi = out.impl();
    autograd::record({out}, [xi, oi, batch, r, c] {
      auto gx = autograd::grad_buffer(xi);
      const auto& g = oi->grad;
      for (int64_t bi = 0; bi < batch; ++bi) {
        const double* src = g.data() + bi * r * c;
        double* dst = gx.data() + bi * r * c;
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) dst[i * c + j] += src[j * r + i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oi = out.impl();
    autograd::record({out}, [xi, oi] {
      auto gx = autograd::grad_buffer(xi);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  for (const Tensor& p : parts) detail::require_rank(p, 4, "concat_channels", "input");
  const int64_t b = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.dim(0) != b || p.dim(2) != h || p.dim(3) != w) {
      throw ShapeError("concat_channels: " + shape_str(p.shape()) + " does not match " +
                       shape_str(parts[0].shape()) + " outside the channel axis");
    }
    total += p.dim(1);
  }
  const int64_t plane = h * w;
  Tensor out({b, total, h, w});
  auto o = out.data();
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t c = p.dim(1);
    auto in = p.data();
    for (int64_t bi = 0; bi < b; ++bi) {
      std::memcpy(o.data() + (bi * total + offset) * plane, in.data() + bi * c * plane,
                  sizeof(double) * static_cast<std::size_t>(c * plane));
    }
    offset += c;
  }
  if (autograd::any_requires_grad(parts)) {
    std::vector<ImplPtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    ImplPtr oi = out.impl();
    autograd::record({out}, [ins, oi, b, total, plane] {
      const auto& g = oi->grad;
      int64_t off = 0;
      for (const ImplPtr& p : ins) {
        const int64_t c = p->shape[1];
        if (wants_grad(p)) {
          auto gp = autograd::grad_buffer(p);
          for (int64_t bi = 0; bi < b; ++bi) {
            const double* src = g.data() + (bi * total + off) * plane;
            double* dst = gp.data() + bi * c * plane;
            for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
        off += c;
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, int64_t start, int64_t count) {
  detail::require_rank(x, 4, "slice_channels", "input");
  const int64_t b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (start < 0 || count <= 0 || start + count > c) {
    throw ShapeError("slice_channels: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") exceeds channel extent " +
                     std::to_string(c));
  }
  Tensor out({b, count, x.dim(2), x.dim(3)});
  auto in = x.data();
  auto o = out.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    std::memcpy(o.data() + bi * count * plane, in.data() + (bi * c + start) * plane,
                sizeof(double) * static_cast<std::size_t>(count * plane));
  }
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oi = out.impl();
    autograd::record({out}, [xi, oi, b, c, plane, start, count] {
      auto gx = autograd::grad_buffer(xi);
      const auto& g = oi->grad;
      for (int64_t bi = 0; bi < b; ++bi) {
        const double* src = g.data() + bi * count * plane;
        double* dst = gx.data() + (bi * c + start) * plane;
        for (int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x, std::span<const int64_t> sizes) {
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  detail::require_rank(x, 4, "split_channels", "input");
  if (total != x.dim(1)) {
    throw ShapeError("split_channels: sizes sum to " + std::to_string(total) +
                     " but input has " + std::to_string(x.dim(1)) + " channels");
  }
  std::vector<Tensor> parts;
  int64_t start = 0;
  for (int64_t s : sizes) {
    parts.push_back(slice_channels(x, start, s));
    start += s;
  }
  return parts;
}

}  // namespace dabformer
