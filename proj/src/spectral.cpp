#include "dabformer/spectral.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "op_util.hpp"

namespace dabformer {

using detail::finish;
using detail::ImplPtr;
using detail::wants_grad;
using cplx = std::complex<double>;

namespace fft {

bool is_power_of_two(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

struct Plan {
  std::vector<int64_t> bitrev;
  std::vector<cplx> twiddle;  // exp(-2 pi i k / n), k < n/2
};

const Plan& plan_for(int64_t n) {
  thread_local std::map<int64_t, Plan> cache;
  thread_local const Plan* last = nullptr;
  thread_local int64_t last_n = 0;
  if (last && last_n == n) return *last;
  auto it = cache.find(n);
  if (it != cache.end()) {
    last = &it->second;
    last_n = n;
    return *last;
  }
  Plan p;
  int bits = 0;
  while ((int64_t{1} << bits) < n) ++bits;
  p.bitrev.resize(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int64_t r = 0;
    for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
    p.bitrev[static_cast<std::size_t>(i)] = r;
  }
  p.twiddle.resize(static_cast<std::size_t>(n / 2));
  for (int64_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    p.twiddle[static_cast<std::size_t>(k)] = {std::cos(a), std::sin(a)};
  }
  return cache.emplace(n, std::move(p)).first->second;
}

void radix2(std::span<cplx> a, bool inverse) {
  const int64_t n = static_cast<int64_t>(a.size());
  const Plan& p = plan_for(n);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j = p.bitrev[static_cast<std::size_t>(i)];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int64_t len = 2; len <= n; len <<= 1) {
    const int64_t half = len / 2, step = n / len;
    for (int64_t s = 0; s < n; s += len) {
      for (int64_t k = 0; k < half; ++k) {
        const cplx w = p.twiddle[static_cast<std::size_t>(k * step)];
        const double wr = w.real(), wi = inverse ? -w.imag() : w.imag();
        // explicit product: operator* on std::complex goes through the
        // NaN-recovering libgcc helper
        const cplx b = a[s + k + half];
        const cplx v(b.real() * wr - b.imag() * wi, b.real() * wi + b.imag() * wr);
        const cplx u = a[s + k];
        a[s + k] = u + v;
        a[s + k + half] = u - v;
      }
    }
  }
}

void direct(std::span<cplx> a, bool inverse) {
  const int64_t n = static_cast<int64_t>(a.size());
  std::vector<cplx> out(a.size());
  const double sign = inverse ? 1.0 : -1.0;
  for (int64_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (int64_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) /
                         static_cast<double>(n);
      acc += a[t] * cplx(std::cos(ang), std::sin(ang));
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  std::copy(out.begin(), out.end(), a.begin());
}

}  // namespace

void transform(std::span<cplx> data, bool inverse) {
  if (data.size() <= 1) return;
  if (is_power_of_two(static_cast<int64_t>(data.size()))) {
    radix2(data, inverse);
  } else {
    direct(data, inverse);
  }
}

}  // namespace fft

// ---------------------------------------------------------------------------
// Haar

namespace {

void check_subbands(const Subbands& s) {
  const Tensor* bands[] = {&s.ll, &s.hl, &s.lh, &s.hh};
  for (const Tensor* t : bands) detail::require_rank(*t, 4, "idwt2", "subband");
  for (const Tensor* t : bands) {
    if (t->shape() != s.ll.shape()) {
      throw ShapeError("idwt2: subband shapes differ: " + shape_str(t->shape()) + " vs LL " +
                       shape_str(s.ll.shape()));
    }
  }
}

// 2x2 analysis butterfly over `planes` images of (2*hh_) x (2*wh) pixels.
void haar_blocks(int64_t planes, int64_t hh_, int64_t wh, const double* in_px, double* ll,
                 double* hl, double* lh, double* hh) {
  const int64_t w = wh * 2;
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = in_px + p * hh_ * 2 * w;
    const int64_t off = p * hh_ * wh;
    for (int64_t i = 0; i < hh_; ++i) {
      const double* r0 = src + 2 * i * w;
      const double* r1 = r0 + w;
      for (int64_t j = 0; j < wh; ++j) {
        const double a = r0[2 * j], b = r0[2 * j + 1], c = r1[2 * j], d = r1[2 * j + 1];
        const int64_t k = off + i * wh + j;
        ll[k] = 0.5 * (a + b + c + d);
        hl[k] = 0.5 * (a - b + c - d);
        lh[k] = 0.5 * (a + b - c - d);
        hh[k] = 0.5 * (a - b - c + d);
      }
    }
  }
}

void haar_synthesis(int64_t planes, int64_t hh_, int64_t wh, const double* ll, const double* hl,
                    const double* lh, const double* hh, double* out_px, bool accumulate) {
  const int64_t w = wh * 2;
  for (int64_t p = 0; p < planes; ++p) {
    double* dst = out_px + p * hh_ * 2 * w;
    const int64_t off = p * hh_ * wh;
    for (int64_t i = 0; i < hh_; ++i) {
      double* r0 = dst + 2 * i * w;
      double* r1 = r0 + w;
      for (int64_t j = 0; j < wh; ++j) {
        const int64_t k = off + i * wh + j;
        const double s = ll[k], h = hl[k], v = lh[k], d = hh[k];
        const double a = 0.5 * (s + h + v + d);
        const double b = 0.5 * (s - h + v - d);
        const double c = 0.5 * (s + h - v - d);
        const double e = 0.5 * (s - h - v + d);
        if (accumulate) {
          r0[2 * j] += a;
          r0[2 * j + 1] += b;
          r1[2 * j] += c;
          r1[2 * j + 1] += e;
        } else {
          r0[2 * j] = a;
          r0[2 * j + 1] = b;
          r1[2 * j] = c;
          r1[2 * j + 1] = e;
        }
      }
    }
  }
}

}  // namespace

Subbands dwt2(const Tensor& x) {
  detail::require_rank(x, 4, "dwt2", "input");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("dwt2: height and width must be even, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  const Shape half{b, c, h / 2, w / 2};
  Subbands s{Tensor(half), Tensor(half), Tensor(half), Tensor(half)};
  haar_blocks(b * c, h / 2, w / 2, x.data().data(), s.ll.data().data(), s.hl.data().data(),
              s.lh.data().data(), s.hh.data().data());
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl();
    ImplPtr o[4] = {s.ll.impl(), s.hl.impl(), s.lh.impl(), s.hh.impl()};
    autograd::record({s.ll, s.hl, s.lh, s.hh}, [xi, o0 = o[0], o1 = o[1], o2 = o[2], o3 = o[3],
                                                 b, c, h, w] {
      // The analysis matrix is orthogonal, so its adjoint is the synthesis.
      haar_synthesis(b * c, h / 2, w / 2, o0->grad.data(), o1->grad.data(), o2->grad.data(),
                     o3->grad.data(), autograd::grad_buffer(xi).data(), true);
    });
  }
  return s;
}

Tensor idwt2(const Subbands& s) {
  check_subbands(s);
  const int64_t b = s.ll.dim(0), c = s.ll.dim(1), hh_ = s.ll.dim(2), wh = s.ll.dim(3);
  Tensor out({b, c, hh_ * 2, wh * 2});
  haar_synthesis(b * c, hh_, wh, s.ll.data().data(), s.hl.data().data(), s.lh.data().data(),
                 s.hh.data().data(), out.data().data(), false);
  if (autograd::any_requires_grad({&s.ll, &s.hl, &s.lh, &s.hh})) {
    ImplPtr in[4] = {s.ll.impl(), s.hl.impl(), s.lh.impl(), s.hh.impl()};
    ImplPtr oi = out.impl();
    autograd::record({out}, [i0 = in[0], i1 = in[1], i2 = in[2], i3 = in[3], oi, b, c, hh_, wh] {
      const std::size_t n = i0->data.size();
      std::vector<double> g[4];
      for (auto& v : g) v.resize(n);
      haar_blocks(b * c, hh_, wh, oi->grad.data(), g[0].data(), g[1].data(), g[2].data(),
                  g[3].data());
      const ImplPtr ins[4] = {i0, i1, i2, i3};
      for (int k = 0; k < 4; ++k) {
        if (!wants_grad(ins[k])) continue;
        auto dst = autograd::grad_buffer(ins[k]);
        for (std::size_t i = 0; i < n; ++i) dst[i] += g[k][i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Real FFT

namespace {

struct Grid {
  int64_t planes, h, w, wf;
};

Grid grid_of(const Tensor& x, const char* op) {
  if (!x.defined() || x.rank() < 2) throw ShapeError(std::string(op) + ": rank must be >= 2");
  Grid g;
  g.h = x.dim(-2);
  g.w = x.dim(-1);
  g.wf = g.w / 2 + 1;
  g.planes = g.h * g.w == 0 ? 0 : x.numel() / (g.h * g.w);
  return g;
}

// Spectrum (re, im) of one real plane: rows first, then the kept columns.
void rfft_plane(const double* x, int64_t h, int64_t w, double* re, double* im,
                std::vector<cplx>& row, std::vector<cplx>& col, std::vector<cplx>& half) {
  const int64_t wf = w / 2 + 1;
  half.resize(static_cast<std::size_t>(h * wf));
  row.resize(static_cast<std::size_t>(w));
  col.resize(static_cast<std::size_t>(h));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) row[j] = {x[i * w + j], 0.0};
    fft::transform(row, false);
    for (int64_t k = 0; k < wf; ++k) half[i * wf + k] = row[k];
  }
  for (int64_t k = 0; k < wf; ++k) {
    for (int64_t i = 0; i < h; ++i) col[i] = half[i * wf + k];
    fft::transform(col, false);
    for (int64_t i = 0; i < h; ++i) {
      re[i * wf + k] = col[i].real();
      im[i * wf + k] = col[i].imag();
    }
  }
}

// x[h,w] = scale * Re( sum_{kh, kw <= W/2} mult(kw) Z[kh,kw] e^{+i phase} )
// with mult = 1 for the self-conjugate columns (DC, Nyquist) and 2 otherwise
// when `hermitian`, or 1 everywhere when not (the adjoint of rfft_plane).
void synth_plane(const double* re, const double* im, int64_t h, int64_t w, double scale,
                 bool hermitian, double* x, bool accumulate, std::vector<cplx>& row,
                 std::vector<cplx>& col, std::vector<cplx>& half) {
  const int64_t wf = w / 2 + 1;
  half.resize(static_cast<std::size_t>(h * wf));
  row.resize(static_cast<std::size_t>(w));
  col.resize(static_cast<std::size_t>(h));
  for (int64_t k = 0; k < wf; ++k) {
    double m = 1.0;
    if (hermitian && k != 0 && !(w % 2 == 0 && k == w / 2)) m = 2.0;
    for (int64_t i = 0; i < h; ++i) col[i] = m * cplx(re[i * wf + k], im[i * wf + k]);
    fft::transform(col, true);
    for (int64_t i = 0; i < h; ++i) half[i * wf + k] = col[i];
  }
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t k = 0; k < w; ++k) row[k] = k < wf ? half[i * wf + k] : cplx(0.0, 0.0);
    fft::transform(row, true);
    for (int64_t j = 0; j < w; ++j) {
      const double v = scale * row[j].real();
      if (accumulate) {
        x[i * w + j] += v;
      } else {
        x[i * w + j] = v;
      }
    }
  }
}

double mult_for(int64_t k, int64_t w) { return (k == 0 || (w % 2 == 0 && k == w / 2)) ? 1.0 : 2.0; }

}  // namespace

ComplexMap rfft2(const Tensor& x) {
  const Grid g = grid_of(x, "rfft2");
  Shape shape = x.shape();
  shape.back() = g.wf;
  ComplexMap out{Tensor(shape), Tensor(shape)};
  {
    std::vector<cplx> row, col, half;
    const double* in = x.data().data();
    double* re = out.real.data().data();
    double* im = out.imag.data().data();
    for (int64_t p = 0; p < g.planes; ++p) {
      rfft_plane(in + p * g.h * g.w, g.h, g.w, re + p * g.h * g.wf, im + p * g.h * g.wf, row, col,
                 half);
    }
  }
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), ri = out.real.impl(), ii = out.imag.impl();
    autograd::record({out.real, out.imag}, [xi, ri, ii, g] {
      std::vector<cplx> row, col, half;
      double* gx = autograd::grad_buffer(xi).data();
      for (int64_t p = 0; p < g.planes; ++p) {
        synth_plane(ri->grad.data() + p * g.h * g.wf, ii->grad.data() + p * g.h * g.wf, g.h, g.w,
                    1.0, false, gx + p * g.h * g.w, true, row, col, half);
      }
    });
  }
  finish(out.real, "rfft2");
  finish(out.imag, "rfft2");
  return out;
}

Tensor irfft2(const ComplexMap& spectrum, int64_t height, int64_t width) {
  detail::require_same_shape(spectrum.real, spectrum.imag, "irfft2");
  const Tensor& re = spectrum.real;
  if (re.rank() < 2 || re.dim(-2) != height || re.dim(-1) != width / 2 + 1) {
    throw ShapeError("irfft2: spectrum " + shape_str(re.shape()) + " does not match a " +
                     std::to_string(height) + "x" + std::to_string(width) + " signal");
  }
  Shape shape = re.shape();
  shape.back() = width;
  Tensor out(shape);
  const Grid g{height * width == 0 ? 0 : out.numel() / (height * width), height, width,
               width / 2 + 1};
  const double scale = 1.0 / static_cast<double>(height * width);
  {
    std::vector<cplx> row, col, half;
    for (int64_t p = 0; p < g.planes; ++p) {
      synth_plane(re.data().data() + p * g.h * g.wf, spectrum.imag.data().data() + p * g.h * g.wf,
                  g.h, g.w, scale, true, out.data().data() + p * g.h * g.w, false, row, col, half);
    }
  }
  if (autograd::any_requires_grad({&spectrum.real, &spectrum.imag})) {
    ImplPtr ri = spectrum.real.impl(), ii = spectrum.imag.impl(), oi = out.impl();
    autograd::record({out}, [ri, ii, oi, g, scale] {
      std::vector<cplx> row, col, half;
      std::vector<double> gre(static_cast<std::size_t>(g.h * g.wf)), gim(gre.size());
      double* dre = wants_grad(ri) ? autograd::grad_buffer(ri).data() : nullptr;
      double* dim = wants_grad(ii) ? autograd::grad_buffer(ii).data() : nullptr;
      for (int64_t p = 0; p < g.planes; ++p) {
        rfft_plane(oi->grad.data() + p * g.h * g.w, g.h, g.w, gre.data(), gim.data(), row, col,
                   half);
        for (int64_t i = 0; i < g.h; ++i)
          for (int64_t k = 0; k < g.wf; ++k) {
            const double m = mult_for(k, g.w) * scale;
            const int64_t idx = i * g.wf + k;
            if (dre) dre[p * g.h * g.wf + idx] += m * gre[idx];
            if (dim) dim[p * g.h * g.wf + idx] += m * gim[idx];
          }
      }
    });
  }
  return finish(std::move(out), "irfft2");
}

ComplexMap complex_pointwise_filter(const ComplexMap& feature, const ComplexMap& filter) {
  detail::require_same_shape(feature.real, feature.imag, "complex_pointwise_filter");
  detail::require_same_shape(filter.real, filter.imag, "complex_pointwise_filter");
  const Shape& fs = feature.real.shape();
  const Shape& ws = filter.real.shape();
  const bool shared = ws.size() + 1 == fs.size() && std::equal(ws.begin(), ws.end(), fs.begin() + 1);
  if (!shared && ws != fs) {
    throw ShapeError("complex_pointwise_filter: filter " + shape_str(ws) +
                     " is not broadcastable over feature " + shape_str(fs));
  }
  const int64_t per = filter.real.numel();
  const int64_t reps = feature.real.numel() / std::max<int64_t>(per, 1);
  ComplexMap out{Tensor(fs), Tensor(fs)};
  const double* a = feature.real.data().data();
  const double* b = feature.imag.data().data();
  const double* c = filter.real.data().data();
  const double* d = filter.imag.data().data();
  double* orr = out.real.data().data();
  double* oim = out.imag.data().data();
  for (int64_t r = 0; r < reps; ++r) {
    const int64_t off = r * per;
    for (int64_t i = 0; i < per; ++i) {
      orr[off + i] = a[off + i] * c[i] - b[off + i] * d[i];
      oim[off + i] = a[off + i] * d[i] + b[off + i] * c[i];
    }
  }
  if (autograd::any_requires_grad({&feature.real, &feature.imag, &filter.real, &filter.imag})) {
    ImplPtr fa = feature.real.impl(), fb = feature.imag.impl();
    ImplPtr wc = filter.real.impl(), wd = filter.imag.impl();
    ImplPtr ore = out.real.impl(), oimg = out.imag.impl();
    autograd::record({out.real, out.imag}, [fa, fb, wc, wd, ore, oimg, per, reps] {
      const double* gr = ore->grad.data();
      const double* gi = oimg->grad.data();
      const double* a = fa->data.data();
      const double* b = fb->data.data();
      const double* c = wc->data.data();
      const double* d = wd->data.data();
      double* da = wants_grad(fa) ? autograd::grad_buffer(fa).data() : nullptr;
      double* db = wants_grad(fb) ? autograd::grad_buffer(fb).data() : nullptr;
      double* dc = wants_grad(wc) ? autograd::grad_buffer(wc).data() : nullptr;
      double* dd = wants_grad(wd) ? autograd::grad_buffer(wd).data() : nullptr;
      for (int64_t r = 0; r < reps; ++r) {
        const int64_t off = r * per;
        for (int64_t i = 0; i < per; ++i) {
          const int64_t k = off + i;
          if (da) da[k] += gr[k] * c[i] + gi[k] * d[i];
          if (db) db[k] += -gr[k] * d[i] + gi[k] * c[i];
          if (dc) dc[i] += gr[k] * a[k] + gi[k] * b[k];
          if (dd) dd[i] += -gr[k] * b[k] + gi[k] * a[k];
        }
      }
    });
  }
  finish(out.real, "complex_pointwise_filter");
  finish(out.imag, "complex_pointwise_filter");
  return out;
}

}  // namespace dabformer
