#pragma once

#include <span>
#include <vector>

#include "dabformer/tensor.hpp"

namespace dabformer {

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);
// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& x);
// Zero gradient outside [lo, hi].
Tensor clamp(const Tensor& x, double lo, double hi);

// Full reductions to a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l2_norm(const Tensor& x);

// Batched products over the trailing two axes; leading axes must agree.
Tensor matmul(const Tensor& a, const Tensor& b);     // [..,M,K] x [..,K,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [..,M,K] x [..,N,K]^T
Tensor transpose(const Tensor& x);                   // swap trailing two axes
Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& x, int64_t start, int64_t count);
std::vector<Tensor> split_channels(const Tensor& x, std::span<const int64_t> sizes);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// Cross-correlation with zero padding. x: [B,Cin,H,W], w: [Cout,Cin/groups,Kh,Kw],
// bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias = {},
              Conv2dOptions options = {});

// Normalizes each (b, h, w) location across channels, then applies the
// per-channel affine terms.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);

Tensor softmax(const Tensor& x, int axis);

// [B,C,H,W] -> [B,C*r*r,H/r,W/r]; output channel c*r*r + i*r + j holds the
// sub-pixel at row offset i, column offset j.
Tensor pixel_unshuffle(const Tensor& x, int r);
Tensor pixel_shuffle(const Tensor& x, int r);

// Bottom/right padding. Reflection excludes the edge sample.
Tensor pad_reflect(const Tensor& x, int64_t pad_bottom, int64_t pad_right);
Tensor pad_zero(const Tensor& x, int64_t pad_bottom, int64_t pad_right);
// Edge replication by `pad` pixels on all four sides.
Tensor pad_replicate(const Tensor& x, int64_t pad);
// Keeps the top-left h x w window.
Tensor crop(const Tensor& x, int64_t height, int64_t width);

// [B,C,H,W] -> [B*(H/p)*(W/p), C, p, p], patches in row-major order per image.
Tensor patchify(const Tensor& x, int64_t patch);
Tensor unpatchify(const Tensor& patches, int64_t batch, int64_t height, int64_t width);

}  // namespace dabformer
