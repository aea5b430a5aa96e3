#include <algorithm>
#include <functional>

#include "dabformer/ops.hpp"
#include "op_util.hpp"

namespace dabformer {

using detail::ImplPtr;

namespace {

// Output element i reads input element index[i] (or nothing when index[i] < 0).
// Every layout op below is such a gather; backward scatters through the same map.
Tensor gather(const Tensor& x, Shape out_shape, std::vector<int64_t> index) {
  Tensor out(std::move(out_shape));
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < index.size(); ++i) o[i] = index[i] >= 0 ? in[index[i]] : 0.0;
  if (autograd::any_requires_grad({&x})) {
    ImplPtr xi = x.impl(), oi = out.impl();
    autograd::record({out}, [xi, oi, index = std::move(index)] {
      auto gx = autograd::grad_buffer(xi);
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= 0) gx[index[i]] += g[i];
      }
    });
  }
  return out;
}

}  // namespace

Tensor pixel_unshuffle(const Tensor& x, int r) {
  detail::require_rank(x, 4, "pixel_unshuffle", "input");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (r < 1 || h % r != 0 || w % r != 0) {
    throw ShapeError("pixel_unshuffle: height " + std::to_string(h) + " and width " +
                     std::to_string(w) + " must be divisible by " + std::to_string(r));
  }
  const int64_t ho = h / r, wo = w / r, co = c * r * r;
  std::vector<int64_t> index(static_cast<std::size_t>(x.numel()));
  std::size_t k = 0;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t oc = 0; oc < co; ++oc) {
      const int64_t ci = oc / (r * r), i = (oc / r) % r, j = oc % r;
      for (int64_t y = 0; y < ho; ++y)
        for (int64_t xx = 0; xx < wo; ++xx)
          index[k++] = ((bi * c + ci) * h + y * r + i) * w + xx * r + j;
    }
  return gather(x, {b, co, ho, wo}, std::move(index));
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  detail::require_rank(x, 4, "pixel_shuffle", "input");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (r < 1 || c % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(c) + " not divisible by " +
                     std::to_string(r * r));
  }
  const int64_t co = c / (r * r), ho = h * r, wo = w * r;
  std::vector<int64_t> index(static_cast<std::size_t>(x.numel()));
  std::size_t k = 0;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t y = 0; y < ho; ++y)
        for (int64_t xx = 0; xx < wo; ++xx) {
          const int64_t ci = oc * r * r + (y % r) * r + (xx % r);
          index[k++] = ((bi * c + ci) * h + y / r) * w + xx / r;
        }
  return gather(x, {b, co, ho, wo}, std::move(index));
}

namespace {

Tensor pad_with(const Tensor& x, int64_t pb, int64_t pr, const char* op,
                const std::function<int64_t(int64_t, int64_t)>& source) {
  detail::require_rank(x, 4, op, "input");
  if (pb < 0 || pr < 0) throw ShapeError(std::string(op) + ": negative padding");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = h + pb, wo = w + pr;
  std::vector<int64_t> index(static_cast<std::size_t>(b * c * ho * wo));
  std::size_t k = 0;
  for (int64_t p = 0; p < b * c; ++p)
    for (int64_t y = 0; y < ho; ++y) {
      const int64_t sy = source(y, h);
      for (int64_t xx = 0; xx < wo; ++xx) {
        const int64_t sx = source(xx, w);
        index[k++] = (sy < 0 || sx < 0) ? -1 : (p * h + sy) * w + sx;
      }
    }
  return gather(x, {b, c, ho, wo}, std::move(index));
}

}  // namespace

Tensor pad_reflect(const Tensor& x, int64_t pad_bottom, int64_t pad_right) {
  detail::require_rank(x, 4, "pad_reflect", "input");
  if (pad_bottom >= x.dim(2) || pad_right >= x.dim(3)) {
    throw ShapeError("pad_reflect: padding (" + std::to_string(pad_bottom) + ", " +
                     std::to_string(pad_right) + ") must be smaller than the extent " +
                     shape_str(x.shape()));
  }
  return pad_with(x, pad_bottom, pad_right, "pad_reflect",
                  [](int64_t i, int64_t n) { return i < n ? i : 2 * n - 2 - i; });
}

Tensor pad_zero(const Tensor& x, int64_t pad_bottom, int64_t pad_right) {
  return pad_with(x, pad_bottom, pad_right, "pad_zero",
                  [](int64_t i, int64_t n) { return i < n ? i : int64_t{-1}; });
}

Tensor pad_replicate(const Tensor& x, int64_t pad) {
  detail::require_rank(x, 4, "pad_replicate", "input");
  if (pad < 0) throw ShapeError("pad_replicate: negative padding");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = h + 2 * pad, wo = w + 2 * pad;
  std::vector<int64_t> index(static_cast<std::size_t>(b * c * ho * wo));
  std::size_t k = 0;
  for (int64_t p = 0; p < b * c; ++p)
    for (int64_t y = 0; y < ho; ++y) {
      const int64_t sy = std::clamp<int64_t>(y - pad, 0, h - 1);
      for (int64_t xx = 0; xx < wo; ++xx) {
        index[k++] = (p * h + sy) * w + std::clamp<int64_t>(xx - pad, 0, w - 1);
      }
    }
  return gather(x, {b, c, ho, wo}, std::move(index));
}

Tensor crop(const Tensor& x, int64_t height, int64_t width) {
  detail::require_rank(x, 4, "crop", "input");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (height < 1 || width < 1 || height > h || width > w) {
    throw ShapeError("crop: window " + std::to_string(height) + "x" + std::to_string(width) +
                     " outside " + shape_str(x.shape()));
  }
  std::vector<int64_t> index(static_cast<std::size_t>(b * c * height * width));
  std::size_t k = 0;
  for (int64_t p = 0; p < b * c; ++p)
    for (int64_t y = 0; y < height; ++y)
      for (int64_t xx = 0; xx < width; ++xx) index[k++] = (p * h + y) * w + xx;
  return gather(x, {b, c, height, width}, std::move(index));
}

Tensor patchify(const Tensor& x, int64_t patch) {
  detail::require_rank(x, 4, "patchify", "input");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (patch < 1 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patchify: height " + std::to_string(h) + " and width " +
                     std::to_string(w) + " must be divisible by patch size " +
                     std::to_string(patch));
  }
  const int64_t nh = h / patch, nw = w / patch;
  std::vector<int64_t> index(static_cast<std::size_t>(x.numel()));
  std::size_t k = 0;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t py = 0; py < nh; ++py)
      for (int64_t px = 0; px < nw; ++px)
        for (int64_t ci = 0; ci < c; ++ci)
          for (int64_t y = 0; y < patch; ++y)
            for (int64_t xx = 0; xx < patch; ++xx)
              index[k++] = ((bi * c + ci) * h + py * patch + y) * w + px * patch + xx;
  return gather(x, {b * nh * nw, c, patch, patch}, std::move(index));
}

Tensor unpatchify(const Tensor& patches, int64_t batch, int64_t height, int64_t width) {
  detail::require_rank(patches, 4, "unpatchify", "input");
  const int64_t n = patches.dim(0), c = patches.dim(1), p = patches.dim(2);
  if (patches.dim(3) != p || p < 1 || height % p != 0 || width % p != 0 ||
      n != batch * (height / p) * (width / p)) {
    throw ShapeError("unpatchify: patches " + shape_str(patches.shape()) +
                     " do not tile a batch of " + std::to_string(batch) + " images of " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const int64_t nh = height / p, nw = width / p;
  std::vector<int64_t> index(static_cast<std::size_t>(patches.numel()));
  std::size_t k = 0;
  for (int64_t bi = 0; bi < batch; ++bi)
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t y = 0; y < height; ++y)
        for (int64_t xx = 0; xx < width; ++xx) {
          const int64_t pi = (bi * nh + y / p) * nw + xx / p;
          index[k++] = ((pi * c + ci) * p + y % p) * p + xx % p;
        }
  return gather(patches, {batch, c, height, width}, std::move(index));
}

}  // namespace dabformer
