#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "dabformer/ops.hpp"
#include "op_util.hpp"

namespace dabformer {

using detail::finish;
using detail::ImplPtr;
using detail::wants_grad;

namespace {

struct ConvGeom {
  int64_t batch, cin, h, w;
  int64_t cout, kh, kw;
  int64_t ho, wo;
  int64_t cin_g, cout_g;
  int stride, pad, groups;

  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0 && groups == 1; }
};

int64_t floor_div(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Output positions o in [lo, hi) whose input tap o*stride + k - pad lies inside [0, n).
void tap_range(int64_t k, int64_t n, int64_t n_out, int stride, int pad, int64_t& lo,
               int64_t& hi) {
  lo = std::max<int64_t>(0, -floor_div(k - pad, stride));
  hi = std::min<int64_t>(n_out, floor_div(n - 1 + pad - k, stride) + 1);
  if (hi < lo) hi = lo;
}

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, const Tensor& bias,
                       const Conv2dOptions& opt) {
  detail::require_rank(x, 4, "conv2d", "input");
  detail::require_rank(w, 4, "conv2d", "weight");
  ConvGeom g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.groups = opt.groups;
  if (opt.groups < 1 || opt.stride < 1 || opt.padding < 0) {
    throw ShapeError("conv2d: stride and groups must be >= 1 and padding >= 0");
  }
  if (g.cin % g.groups != 0) {
    throw ShapeError("conv2d: input channels " + std::to_string(g.cin) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  if (g.cout % g.groups != 0) {
    throw ShapeError("conv2d: output channels " + std::to_string(g.cout) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (w.dim(1) != g.cin_g) {
    throw ShapeError("conv2d: weight input-channel extent " + std::to_string(w.dim(1)) +
                     " != input channels / groups = " + std::to_string(g.cin_g));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ShapeError("conv2d: kernel extents must be odd, got " + std::to_string(g.kh) + "x" +
                     std::to_string(g.kw));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) +
                     " does not match output channels " + std::to_string(g.cout));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                     " larger than padded input height/width " + std::to_string(g.h) + "x" +
                     std::to_string(g.w));
  }
  return g;
}

// Visits every (output plane, input plane, tap, output row) with the valid
// column span; `fn(out_off, in_off, w_index, n)` addresses contiguous rows
// for stride 1 (strided input otherwise).
template <typename Fn>
void for_each_tap_row(const ConvGeom& g, int64_t b, int64_t co, Fn&& fn) {
  const int64_t grp = co / g.cout_g;
  for (int64_t cl = 0; cl < g.cin_g; ++cl) {
    const int64_t ci = grp * g.cin_g + cl;
    const int64_t in_plane = (b * g.cin + ci) * g.h * g.w;
    const int64_t w_base = (co * g.cin_g + cl) * g.kh * g.kw;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      int64_t oy0, oy1;
      tap_range(ky, g.h, g.ho, g.stride, g.pad, oy0, oy1);
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        int64_t ox0, ox1;
        tap_range(kx, g.w, g.wo, g.stride, g.pad, ox0, ox1);
        if (ox1 <= ox0) continue;
        const int64_t widx = w_base + ky * g.kw + kx;
        for (int64_t oy = oy0; oy < oy1; ++oy) {
          const int64_t iy = oy * g.stride + ky - g.pad;
          const int64_t ix = ox0 * g.stride + kx - g.pad;
          fn(oy * g.wo + ox0, in_plane + iy * g.w + ix, widx, ox1 - ox0);
        }
      }
    }
  }
}

void conv_forward(const ConvGeom& g, const double* x, const double* w, const double* bias,
                  double* out) {
  const int64_t plane_out = g.ho * g.wo;
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t co = 0; co < g.cout; ++co) {
      double* o = out + (b * g.cout + co) * plane_out;
      std::fill(o, o + plane_out, bias ? bias[co] : 0.0);
    }
  }
  if (g.pointwise()) {
    const int64_t plane = g.h * g.w;
    for (int64_t b = 0; b < g.batch; ++b) {
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(g.cout),
                  static_cast<int>(plane), static_cast<int>(g.cin), 1.0, w,
                  static_cast<int>(g.cin), x + b * g.cin * plane, static_cast<int>(plane), 1.0,
                  out + b * g.cout * plane, static_cast<int>(plane));
    }
    return;
  }
  const int s = g.stride;
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t co = 0; co < g.cout; ++co) {
      double* o = out + (b * g.cout + co) * plane_out;
      for_each_tap_row(g, b, co, [&](int64_t oo, int64_t io, int64_t wi, int64_t n) {
        const double wv = w[wi];
        double* dst = o + oo;
        const double* src = x + io;
        if (s == 1) {
          for (int64_t i = 0; i < n; ++i) dst[i] += wv * src[i];
        } else {
          for (int64_t i = 0; i < n; ++i) dst[i] += wv * src[i * s];
        }
      });
    }
  }
}

void conv_backward(const ConvGeom& g, const double* x, const double* w, const double* gout,
                   double* gx, double* gw, double* gb) {
  const int64_t plane_out = g.ho * g.wo;
  if (gb) {
    for (int64_t b = 0; b < g.batch; ++b) {
      for (int64_t co = 0; co < g.cout; ++co) {
        const double* go = gout + (b * g.cout + co) * plane_out;
        double acc = 0.0;
        for (int64_t i = 0; i < plane_out; ++i) acc += go[i];
        gb[co] += acc;
      }
    }
  }
  if (g.pointwise()) {
    const int64_t plane = g.h * g.w;
    for (int64_t b = 0; b < g.batch; ++b) {
      const double* go = gout + b * g.cout * plane;
      if (gx) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(g.cin),
                    static_cast<int>(plane), static_cast<int>(g.cout), 1.0, w,
                    static_cast<int>(g.cin), go, static_cast<int>(plane), 1.0,
                    gx + b * g.cin * plane, static_cast<int>(plane));
      }
      if (gw) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(g.cout),
                    static_cast<int>(g.cin), static_cast<int>(plane), 1.0, go,
                    static_cast<int>(plane), x + b * g.cin * plane, static_cast<int>(plane), 1.0,
                    gw, static_cast<int>(g.cin));
      }
    }
    return;
  }
  const int s = g.stride;
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t co = 0; co < g.cout; ++co) {
      const double* go = gout + (b * g.cout + co) * plane_out;
      for_each_tap_row(g, b, co, [&](int64_t oo, int64_t io, int64_t wi, int64_t n) {
        const double* gsrc = go + oo;
        if (gx) {
          const double wv = w[wi];
          double* dst = gx + io;
          if (s == 1) {
            for (int64_t i = 0; i < n; ++i) dst[i] += wv * gsrc[i];
          } else {
            for (int64_t i = 0; i < n; ++i) dst[i * s] += wv * gsrc[i];
          }
        }
        if (gw) {
          const double* src = x + io;
          double acc = 0.0;
          if (s == 1) {
            for (int64_t i = 0; i < n; ++i) acc += gsrc[i] * src[i];
          } else {
            for (int64_t i = 0; i < n; ++i) acc += gsrc[i] * src[i * s];
          }
          gw[wi] += acc;
        }
      });
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions options) {
  const ConvGeom g = conv_geometry(x, w, bias, options);
  Tensor out({g.batch, g.cout, g.ho, g.wo});
  conv_forward(g, x.data().data(), w.data().data(), bias.defined() ? bias.data().data() : nullptr,
               out.data().data());
  if (autograd::any_requires_grad({&x, &w, &bias})) {
    ImplPtr xi = x.impl(), wi = w.impl(), bi = bias.defined() ? bias.impl() : nullptr;
    ImplPtr oi = out.impl();
    autograd::record({out}, [g, xi, wi, bi, oi] {
      double* gx = wants_grad(xi) ? autograd::grad_buffer(xi).data() : nullptr;
      double* gw = wants_grad(wi) ? autograd::grad_buffer(wi).data() : nullptr;
      double* gb = wants_grad(bi) ? autograd::grad_buffer(bi).data() : nullptr;
      conv_backward(g, xi->data.data(), wi->data.data(), oi->grad.data(), gx, gw, gb);
    });
  }
  return finish(std::move(out), "conv2d");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  detail::require_rank(x, 4, "layer_norm", "input");
  const int64_t b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (!gamma.defined() || !beta.defined() || gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(c) +
                     " elements to match the channel axis");
  }
  if (!(eps > 0.0)) throw Error("layer_norm: eps must be positive");
  Tensor out(x.shape());
  // xhat and per-location inverse std are kept for the backward pass.
  std::vector<double> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<double> rstd(static_cast<std::size_t>(b * plane));
  const double* in = x.data().data();
  const double* gm = gamma.data().data();
  const double* bt = beta.data().data();
  double* o = out.data().data();
  std::vector<double> mu(static_cast<std::size_t>(plane)), var(static_cast<std::size_t>(plane));
  const double inv_c = 1.0 / static_cast<double>(c);
  for (int64_t bi = 0; bi < b; ++bi) {
    const double* xb = in + bi * c * plane;
    std::fill(mu.begin(), mu.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t p = 0; p < plane; ++p) mu[p] += xb[ci * plane + p];
    for (int64_t p = 0; p < plane; ++p) mu[p] *= inv_c;
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t p = 0; p < plane; ++p) {
        const double d = xb[ci * plane + p] - mu[p];
        var[p] += d * d;
      }
    double* rs = rstd.data() + bi * plane;
    for (int64_t p = 0; p < plane; ++p) rs[p] = 1.0 / std::sqrt(var[p] * inv_c + eps);
    for (int64_t ci = 0; ci < c; ++ci) {
      double* xh = xhat.data() + (bi * c + ci) * plane;
      double* ob = o + (bi * c + ci) * plane;
      const double* xc = xb + ci * plane;
      for (int64_t p = 0; p < plane; ++p) {
        xh[p] = (xc[p] - mu[p]) * rs[p];
        ob[p] = xh[p] * gm[ci] + bt[ci];
      }
    }
  }
  if (autograd::any_requires_grad({&x, &gamma, &beta})) {
    ImplPtr xi = x.impl(), gi = gamma.impl(), bti = beta.impl(), oi = out.impl();
    autograd::record({out}, [xi, gi, bti, oi, xhat = std::move(xhat), rstd = std::move(rstd), b,
                             c, plane] {
      const double* g = oi->grad.data();
      const double* gm = gi->data.data();
      if (wants_grad(gi) || wants_grad(bti)) {
        double* ggm = wants_grad(gi) ? autograd::grad_buffer(gi).data() : nullptr;
        double* gbt = wants_grad(bti) ? autograd::grad_buffer(bti).data() : nullptr;
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t ci = 0; ci < c; ++ci) {
            const double* gc = g + (bi * c + ci) * plane;
            const double* xh = xhat.data() + (bi * c + ci) * plane;
            double sg = 0.0, sb = 0.0;
            for (int64_t p = 0; p < plane; ++p) {
              sg += gc[p] * xh[p];
              sb += gc[p];
            }
            if (ggm) ggm[ci] += sg;
            if (gbt) gbt[ci] += sb;
          }
      }
      if (!wants_grad(xi)) return;
      double* gx = autograd::grad_buffer(xi).data();
      const double inv_c = 1.0 / static_cast<double>(c);
      std::vector<double> m1(static_cast<std::size_t>(plane)), m2(static_cast<std::size_t>(plane));
      for (int64_t bi = 0; bi < b; ++bi) {
        std::fill(m1.begin(), m1.end(), 0.0);
        std::fill(m2.begin(), m2.end(), 0.0);
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* gc = g + (bi * c + ci) * plane;
          const double* xh = xhat.data() + (bi * c + ci) * plane;
          for (int64_t p = 0; p < plane; ++p) {
            const double dxh = gc[p] * gm[ci];
            m1[p] += dxh;
            m2[p] += dxh * xh[p];
          }
        }
        const double* rs = rstd.data() + bi * plane;
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* gc = g + (bi * c + ci) * plane;
          const double* xh = xhat.data() + (bi * c + ci) * plane;
          double* gxc = gx + (bi * c + ci) * plane;
          for (int64_t p = 0; p < plane; ++p) {
            const double dxh = gc[p] * gm[ci];
            gxc[p] += rs[p] * (dxh - m1[p] * inv_c - xh[p] * m2[p] * inv_c);
          }
        }
      }
    });
  }
  return finish(std::move(out), "layer_norm");
}

Tensor softmax(const Tensor& x, int axis) {
  const int r = x.rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(r));
  }
  int64_t outer = 1, inner = 1;
  const int64_t n = x.dim(a);
  for (int i = 0; i < a; ++i) outer *= x.dim(i);
  for (int i = a + 1; i < r; ++i) inner *= x.dim(i);
  Tensor out(x.shape());
  const double* in = x.data().data();
  double* o = out.data().data();
  for (int64_t oi = 0; oi < outer; ++oi) {
    for (int64_t ii = 0; ii < inner; ++ii) {
      const int64_t base = oi * n * inner + ii;
      double mx = in[base];
      for (int64_t k = 1; k < n; ++k) mx = std::max(mx, in[base + k * inner]);
      double z = 0.0;
      for (int64_t k = 0; k < n; ++k) {
        const double e = std::exp(in[base + k * inner] - mx);
        o[base + k * inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (int64_t k = 0; k < n; ++k) o[base + k * inner] *= inv;
    }
  }
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oimpl = out.impl();
    autograd::record({out}, [xi, oimpl, outer, inner, n] {
      double* gx = autograd::grad_buffer(xi).data();
      const double* g = oimpl->grad.data();
      const double* y = oimpl->data.data();
      for (int64_t oi = 0; oi < outer; ++oi) {
        for (int64_t ii = 0; ii < inner; ++ii) {
          const int64_t base = oi * n * inner + ii;
          double dot = 0.0;
          for (int64_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
          for (int64_t k = 0; k < n; ++k) {
            const int64_t idx = base + k * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return finish(std::move(out), "softmax");
}

}  // namespace dabformer
