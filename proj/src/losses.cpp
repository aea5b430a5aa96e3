#include "dabformer/losses.hpp"

#include <cmath>
#include <limits>

#include "dabformer/random.hpp"

namespace dabformer {

void LossWeights::validate() const {
  if (l1 < 0 || perceptual < 0 || edge < 0 || ssim < 0) {
    throw Error("loss weights must be non-negative");
  }
}

namespace {

void require_pair(const Tensor& o, const Tensor& gt, const char* op) {
  if (o.shape() != gt.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(o.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
}

// Same [k, k] kernel replicated to [C, 1, k, k] for a depthwise conv.
Tensor depthwise_constant(const std::vector<double>& kernel, int64_t k, int64_t channels) {
  Tensor w({channels, 1, k, k});
  auto d = w.data();
  for (int64_t c = 0; c < channels; ++c) std::copy(kernel.begin(), kernel.end(), d.begin() + c * k * k);
  return w;
}

std::vector<double> gaussian_window() {
  const int r = kSsimWindow / 2;
  std::vector<double> g1(kSsimWindow);
  double s = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    g1[i] = std::exp(-static_cast<double>((i - r) * (i - r)) / (2.0 * kSsimSigma * kSsimSigma));
    s += g1[i];
  }
  for (double& v : g1) v /= s;
  std::vector<double> g2(kSsimWindow * kSsimWindow);
  for (int y = 0; y < kSsimWindow; ++y)
    for (int x = 0; x < kSsimWindow; ++x) g2[y * kSsimWindow + x] = g1[y] * g1[x];
  return g2;
}

}  // namespace

ConvPyramidExtractor::ConvPyramidExtractor(uint64_t seed, std::vector<int64_t> widths,
                                           int64_t in_channels) {
  Rng rng(seed);
  int64_t cin = in_channels;
  for (int64_t cout : widths) {
    Conv2d conv;
    conv.weight = Tensor({cout, cin, 3, 3});
    const double std = std::sqrt(2.0 / static_cast<double>(cin * 9));
    for (double& v : conv.weight.data()) v = std * rng.normal();
    conv.bias = Tensor::zeros({cout});
    conv.options = Conv2dOptions{2, 1, 1};
    stages_.push_back(conv);
    cin = cout;
  }
}

ConvPyramidExtractor::ConvPyramidExtractor(std::vector<Tensor> weights, std::vector<Tensor> biases) {
  if (weights.size() != biases.size() || weights.empty()) {
    throw Error("ConvPyramidExtractor: need one bias per stage weight");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rank() != 4 || weights[i].dim(2) != 3 || weights[i].dim(3) != 3 ||
        biases[i].rank() != 1 || biases[i].dim(0) != weights[i].dim(0) ||
        (i > 0 && weights[i].dim(1) != weights[i - 1].dim(0))) {
      throw ShapeError("ConvPyramidExtractor: inconsistent stage " + std::to_string(i));
    }
    Conv2d conv;
    conv.weight = weights[i].detach();
    conv.bias = biases[i].detach();
    conv.options = Conv2dOptions{2, 1, 1};
    stages_.push_back(conv);
  }
}

std::vector<Tensor> ConvPyramidExtractor::features(const Tensor& image) const {
  std::vector<Tensor> out;
  Tensor x = image;
  for (const Conv2d& conv : stages_) {
    x = gelu(conv(x));
    out.push_back(x);
  }
  return out;
}

Tensor l1_loss(const Tensor& o, const Tensor& gt) {
  require_pair(o, gt, "l1_loss");
  return mean(abs(sub(o, gt)));
}

Tensor perceptual_loss(const Tensor& o, const Tensor& gt, const FeatureExtractor& extractor) {
  require_pair(o, gt, "perceptual_loss");
  const std::vector<Tensor> fo = extractor.features(o);
  std::vector<Tensor> fg;
  {
    autograd::NoGradGuard guard;
    fg = extractor.features(gt);
  }
  if (fo.size() != fg.size()) throw ShapeError("perceptual_loss: stage count mismatch");
  Tensor total;
  for (std::size_t s = 0; s < fo.size(); ++s) {
    if (fo[s].shape() != fg[s].shape()) {
      throw ShapeError("perceptual_loss: stage " + std::to_string(s) + " shapes differ: " +
                       shape_str(fo[s].shape()) + " vs " + shape_str(fg[s].shape()));
    }
    Tensor term = mean(abs(sub(fg[s], fo[s])));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor sobel_magnitude(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("sobel_magnitude: expected [B, C, H, W], got " + shape_str(x.shape()));
  const int64_t c = x.dim(1);
  static const std::vector<double> kx = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  static const std::vector<double> ky = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  const Tensor padded = pad_replicate(x, 1);
  const Conv2dOptions dw{1, 0, static_cast<int>(c)};
  const Tensor gx = conv2d(padded, depthwise_constant(kx, 3, c), {}, dw);
  const Tensor gy = conv2d(padded, depthwise_constant(ky, 3, c), {}, dw);
  return sqrt(add_scalar(add(square(gx), square(gy)), kSobelEps));
}

Tensor edge_loss(const Tensor& o, const Tensor& gt) {
  require_pair(o, gt, "edge_loss");
  Tensor sg;
  {
    autograd::NoGradGuard guard;
    sg = sobel_magnitude(gt);
  }
  return mean(abs(sub(sg, sobel_magnitude(o))));
}

Tensor ssim_map(const Tensor& o, const Tensor& gt) {
  require_pair(o, gt, "ssim");
  if (o.rank() != 4) throw ShapeError("ssim: expected [B, C, H, W], got " + shape_str(o.shape()));
  if (o.dim(2) < kSsimWindow || o.dim(3) < kSsimWindow) {
    throw ShapeError("ssim: " + std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) +
                     " window is larger than the " + std::to_string(o.dim(2)) + "x" +
                     std::to_string(o.dim(3)) + " image");
  }
  const int64_t c = o.dim(1);
  static const std::vector<double> window = gaussian_window();
  const Tensor w = depthwise_constant(window, kSsimWindow, c);
  const Conv2dOptions valid{1, 0, static_cast<int>(c)};
  const auto blur = [&](const Tensor& t) { return conv2d(t, w, {}, valid); };
  const Tensor mx = blur(o), my = blur(gt);
  const Tensor mx2 = square(mx), my2 = square(my), mxy = mul(mx, my);
  const Tensor sx = sub(blur(square(o)), mx2);
  const Tensor sy = sub(blur(square(gt)), my2);
  const Tensor sxy = sub(blur(mul(o, gt)), mxy);
  const Tensor num = mul(add_scalar(scale(mxy, 2.0), kSsimC1), add_scalar(scale(sxy, 2.0), kSsimC2));
  const Tensor den = mul(add_scalar(add(mx2, my2), kSsimC1), add_scalar(add(sx, sy), kSsimC2));
  return div(num, den);
}

Tensor ssim(const Tensor& o, const Tensor& gt) { return mean(ssim_map(o, gt)); }

Tensor ssim_loss(const Tensor& o, const Tensor& gt) {
  return add_scalar(scale(ssim(o, gt), -1.0), 1.0);
}

LossTerms total_loss(const Tensor& o, const Tensor& gt, const LossWeights& w,
                     const FeatureExtractor& extractor) {
  w.validate();
  LossTerms t;
  t.l1 = l1_loss(o, gt);
  t.perceptual = perceptual_loss(o, gt, extractor);
  t.edge = edge_loss(o, gt);
  t.ssim = ssim_loss(o, gt);
  t.total = add(add(scale(t.l1, w.l1), scale(t.perceptual, w.perceptual)),
                add(scale(t.edge, w.edge), scale(t.ssim, w.ssim)));
  return t;
}

namespace {

double psnr_from_mse(double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// Mask value for pixel (b, y, x) of a [B, C, H, W] image.
struct MaskView {
  const Tensor& mask;
  int64_t h, w;
  bool shared;

  MaskView(const Tensor& m, const Tensor& image) : mask(m), h(image.dim(2)), w(image.dim(3)) {
    if (m.rank() == 2 && m.dim(0) == h && m.dim(1) == w) {
      shared = true;
    } else if (m.rank() == 3 && m.dim(0) == image.dim(0) && m.dim(1) == h && m.dim(2) == w) {
      shared = false;
    } else {
      throw ShapeError("mask " + shape_str(m.shape()) + " does not match image " +
                       shape_str(image.shape()));
    }
  }
  bool operator()(int64_t b, int64_t y, int64_t x) const {
    return mask.data()[(shared ? 0 : b * h * w) + y * w + x] != 0.0;
  }
};

}  // namespace

double psnr(const Tensor& o, const Tensor& gt) {
  require_pair(o, gt, "psnr");
  double acc = 0.0;
  auto a = o.data(), b = gt.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return psnr_from_mse(acc / static_cast<double>(a.size()));
}

double psnr_masked(const Tensor& o, const Tensor& gt, const Tensor& mask) {
  require_pair(o, gt, "psnr_masked");
  const MaskView m(mask, o);
  const int64_t B = o.dim(0), C = o.dim(1), H = o.dim(2), W = o.dim(3);
  auto a = o.data(), g = gt.data();
  double acc = 0.0;
  int64_t n = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          if (!m(b, y, x)) continue;
          const int64_t i = ((b * C + c) * H + y) * W + x;
          acc += (a[i] - g[i]) * (a[i] - g[i]);
          ++n;
        }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return psnr_from_mse(acc / static_cast<double>(n));
}

double ssim_masked(const Tensor& o, const Tensor& gt, const Tensor& mask) {
  autograd::NoGradGuard guard;
  const MaskView m(mask, o);
  const Tensor map = ssim_map(o, gt);
  const int64_t B = map.dim(0), C = map.dim(1), H = map.dim(2), W = map.dim(3);
  const int64_t r = kSsimWindow / 2;
  auto d = map.data();
  double acc = 0.0;
  int64_t n = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          if (!m(b, y + r, x + r)) continue;
          acc += d[((b * C + c) * H + y) * W + x];
          ++n;
        }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return acc / static_cast<double>(n);
}

}  // namespace dabformer
