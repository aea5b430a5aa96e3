#include "dabformer/oracles.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace dabformer::oracle {

namespace {

constexpr double kPi = std::numbers::pi;

double& at4(Tensor& t, int64_t a, int64_t b, int64_t c, int64_t d) {
  return t.data()[((a * t.dim(1) + b) * t.dim(2) + c) * t.dim(3) + d];
}
double at4(const Tensor& t, int64_t a, int64_t b, int64_t c, int64_t d) {
  return t.data()[((a * t.dim(1) + b) * t.dim(2) + c) * t.dim(3) + d];
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad, int groups) {
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0), Cg = w.dim(1), Kh = w.dim(2), Kw = w.dim(3);
  const int64_t Ho = (H + 2 * pad - Kh) / stride + 1, Wo = (W + 2 * pad - Kw) / stride + 1;
  const int64_t out_per_group = Cout / groups;
  (void)Cin;
  Tensor out({B, Cout, Ho, Wo});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          double acc = bias.defined() ? bias.data()[co] : 0.0;
          const int64_t g = co / out_per_group;
          for (int64_t cl = 0; cl < Cg; ++cl)
            for (int64_t ky = 0; ky < Kh; ++ky)
              for (int64_t kx = 0; kx < Kw; ++kx) {
                const int64_t iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += at4(x, b, g * Cg + cl, iy, ix) * at4(w, co, cl, ky, kx);
              }
          at4(out, b, co, oy, ox) = acc;
        }
  return out;
}

std::vector<std::complex<double>> dft2(const double* plane, int64_t h, int64_t w) {
  std::vector<std::complex<double>> out(static_cast<std::size_t>(h * w));
  for (int64_t u = 0; u < h; ++u)
    for (int64_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const double ang = -2.0 * kPi * (static_cast<double>(u * y) / h + static_cast<double>(v * x) / w);
          acc += plane[y * w + x] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out[u * w + v] = acc;
    }
  return out;
}

std::vector<double> idft2_real(const std::vector<std::complex<double>>& spec, int64_t h, int64_t w) {
  std::vector<double> out(static_cast<std::size_t>(h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      std::complex<double> acc = 0.0;
      for (int64_t u = 0; u < h; ++u)
        for (int64_t v = 0; v < w; ++v) {
          const double ang = 2.0 * kPi * (static_cast<double>(u * y) / h + static_cast<double>(v * x) / w);
          acc += spec[u * w + v] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out[y * w + x] = acc.real() / static_cast<double>(h * w);
    }
  return out;
}

std::vector<double> circular_conv(const std::vector<double>& x, const std::vector<double>& k,
                                  int64_t h, int64_t w) {
  std::vector<double> out(static_cast<std::size_t>(h * w), 0.0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xx = 0; xx < w; ++xx) {
      double acc = 0.0;
      for (int64_t a = 0; a < h; ++a)
        for (int64_t b = 0; b < w; ++b) acc += k[a * w + b] * x[((y - a + h) % h) * w + (xx - b + w) % w];
      out[y * w + xx] = acc;
    }
  return out;
}

std::array<double, 4> haar_block(double a, double b, double c, double d) {
  return {(a + b + c + d) / 2.0, (a - b + c - d) / 2.0, (a + b - c - d) / 2.0, (a - b - c + d) / 2.0};
}

double gabor_value(int x, int y, double lambda, double theta, double psi, double sigma, double gamma) {
  const double xr = x * std::cos(theta) + y * std::sin(theta);
  const double yr = -x * std::sin(theta) + y * std::cos(theta);
  const double envelope = std::exp(-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma));
  return envelope * std::cos(2.0 * kPi * xr / lambda + psi);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Tensor sobel_magnitude(const Tensor& x, double eps) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  Tensor out({B, C, H, W});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx) {
          double gx = 0.0, gy = 0.0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int64_t sy = std::clamp<int64_t>(y + dy, 0, H - 1);
              const int64_t sx = std::clamp<int64_t>(xx + dx, 0, W - 1);
              const double v = at4(x, b, c, sy, sx);
              gx += kx[dy + 1][dx + 1] * v;
              gy += ky[dy + 1][dx + 1] * v;
            }
          at4(out, b, c, y, xx) = std::sqrt(gx * gx + gy * gy + eps);
        }
  return out;
}

double ssim(const Tensor& a, const Tensor& b) {
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double g[win], gs = 0.0;
  for (int i = 0; i < win; ++i) {
    g[i] = std::exp(-((i - 5.0) * (i - 5.0)) / (2.0 * sigma * sigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y + win <= H; ++y)
        for (int64_t x = 0; x + win <= W; ++x) {
          double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (int i = 0; i < win; ++i)
            for (int j = 0; j < win; ++j) {
              const double wt = g[i] * g[j];
              const double va = at4(a, n, c, y + i, x + j), vb = at4(b, n, c, y + i, x + j);
              ma += wt * va;
              mb += wt * vb;
              saa += wt * va * va;
              sbb += wt * vb * vb;
              sab += wt * va * vb;
            }
          const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
          total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
          ++count;
        }
  return total / static_cast<double>(count);
}

double l1(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / static_cast<double>(a.numel());
}

double perceptual(const Tensor& o, const Tensor& gt, const std::vector<Tensor>& weights,
                  const std::vector<Tensor>& biases) {
  Tensor fo = o, fg = gt;
  double total = 0.0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    fo = conv2d(fo, weights[s], biases[s], 2, 1, 1);
    fg = conv2d(fg, weights[s], biases[s], 2, 1, 1);
    for (double& v : fo.data()) v = gelu(v);
    for (double& v : fg.data()) v = gelu(v);
    total += l1(fg, fo);
  }
  return total;
}

double psnr(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  const double mse = s / static_cast<double>(a.numel());
  return mse == 0.0 ? INFINITY : 10.0 * std::log10(1.0 / mse);
}

Tensor fdfa_forward(const Tensor& x, const FdfaWeights& w) {
  const int64_t C = x.dim(1), H = x.dim(2), W = x.dim(3), h2 = H / 2, w2 = W / 2;
  // Haar analysis
  Tensor ll({1, C, h2, w2}), bands[3] = {Tensor({1, C, h2, w2}), Tensor({1, C, h2, w2}), Tensor({1, C, h2, w2})};
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < h2; ++i)
      for (int64_t j = 0; j < w2; ++j) {
        const auto s = haar_block(at4(x, 0, c, 2 * i, 2 * j), at4(x, 0, c, 2 * i, 2 * j + 1),
                                  at4(x, 0, c, 2 * i + 1, 2 * j), at4(x, 0, c, 2 * i + 1, 2 * j + 1));
        at4(ll, 0, c, i, j) = s[0];
        for (int k = 0; k < 3; ++k) at4(bands[k], 0, c, i, j) = s[k + 1];
      }
  // LL: depthwise then pointwise
  const int kll = static_cast<int>(w.ll_dw_w.dim(2));
  Tensor ll2 = conv2d(conv2d(ll, w.ll_dw_w, w.ll_dw_b, 1, kll / 2, static_cast<int>(C)), w.ll_pw_w, w.ll_pw_b, 1, 0, 1);
  // detail bands: Gabor kernel applied per channel
  const int k = w.gabor_ksize, r = k / 2;
  Tensor enhanced[3];
  for (int b = 0; b < 3; ++b) {
    Tensor kern({C, 1, k, k});
    for (int64_t c = 0; c < C; ++c)
      for (int y = -r; y <= r; ++y)
        for (int xx = -r; xx <= r; ++xx)
          at4(kern, c, 0, y + r, xx + r) = gabor_value(xx, y, w.lambda[b], w.theta[b], 0.0, 2.0 * kPi, 0.5);
    enhanced[b] = conv2d(bands[b], kern, Tensor(), 1, r, static_cast<int>(C));
  }
  // Haar synthesis
  Tensor fused({1, C, H, W});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < h2; ++i)
      for (int64_t j = 0; j < w2; ++j) {
        const double a = at4(ll2, 0, c, i, j), hl = at4(enhanced[0], 0, c, i, j),
                     lh = at4(enhanced[1], 0, c, i, j), hh = at4(enhanced[2], 0, c, i, j);
        at4(fused, 0, c, 2 * i, 2 * j) = (a + hl + lh + hh) / 2.0;
        at4(fused, 0, c, 2 * i, 2 * j + 1) = (a - hl + lh - hh) / 2.0;
        at4(fused, 0, c, 2 * i + 1, 2 * j) = (a + hl - lh - hh) / 2.0;
        at4(fused, 0, c, 2 * i + 1, 2 * j + 1) = (a - hl - lh + hh) / 2.0;
      }
  const Tensor q = conv2d(fused, w.q_w, w.q_b, 1, 0, 1);
  const Tensor kv = conv2d(conv2d(x, w.kv_w, w.kv_b, 1, 0, 1), w.kvdw_w, w.kvdw_b, 1, 1, static_cast<int>(2 * C));
  const int64_t M = H * W;
  const auto qv = [&](int64_t c, int64_t m) { return q.data()[c * M + m]; };
  const auto kk = [&](int64_t c, int64_t m) { return kv.data()[c * M + m]; };
  const auto vv = [&](int64_t c, int64_t m) { return kv.data()[(C + c) * M + m]; };
  Tensor mixed({1, C, H, W});
  for (int64_t i = 0; i < C; ++i) {
    std::vector<double> logits(static_cast<std::size_t>(C));
    for (int64_t j = 0; j < C; ++j) {
      double s = 0.0;
      for (int64_t m = 0; m < M; ++m) s += qv(i, m) * kk(j, m);
      logits[j] = s / w.temperature;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (int64_t m = 0; m < M; ++m) {
      double s = 0.0;
      for (int64_t j = 0; j < C; ++j) s += logits[j] / z * vv(j, m);
      mixed.data()[i * M + m] = s;
    }
  }
  Tensor out = conv2d(mixed, w.proj_w, w.proj_b, 1, 0, 1);
  for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] += x.data()[i];
  return out;
}

Tensor parse_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("oracle: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  // magic number: exactly "P6"
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw Error("oracle: not P6");
  pos = 2;
  // header fields: whitespace (and comments) then a decimal integer
  const auto field = [&]() -> long {
    bool any_ws = false;
    for (;;) {
      if (pos >= bytes.size()) throw Error("oracle: truncated header");
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n' && bytes[pos] != '\r') ++pos;
        any_ws = true;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
        any_ws = true;
      } else {
        break;
      }
    }
    if (!any_ws) throw Error("oracle: missing whitespace before header field");
    long v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw Error("oracle: non-numeric header field");
    return v;
  };
  const long w = field(), h = field(), maxval = field();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval >= 65536) throw Error("oracle: bad header values");
  // exactly one whitespace byte before the raster
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error("oracle: missing raster separator");
  ++pos;
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3 * bpp;
  if (bytes.size() - pos != need) throw Error("oracle: raster size mismatch");
  Tensor img({3, h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = pos + ((static_cast<std::size_t>(y) * w + x) * 3 + c) * bpp;
        const double v = bpp == 1 ? bytes[i] : bytes[i] * 256.0 + bytes[i + 1];
        img.data()[(c * h + y) * w + x] = v / static_cast<double>(maxval);
      }
  return img;
}

double cosine_lr(int64_t i, int64_t n, double lr_init, double lr_min) {
  return lr_min + (lr_init - lr_min) / 2.0 * (1.0 + std::cos(kPi * static_cast<double>(i) / static_cast<double>(n - 1)));
}

}  // namespace dabformer::oracle
