#pragma once

#include <complex>
#include <span>

#include "dabformer/tensor.hpp"

namespace dabformer {

// One level of the orthonormal 2-D Haar transform. For each 2x2 block
// [[a, b], [c, d]]:
//   ll = (a+b+c+d)/2   hl = (a-b+c-d)/2   lh = (a+b-c-d)/2   hh = (a-b-c+d)/2
struct Subbands {
  Tensor ll, hl, lh, hh;
};

Subbands dwt2(const Tensor& x);
Tensor idwt2(const Subbands& s);

// Half spectrum of a real transform: both parts are [.., H, W/2 + 1].
struct ComplexMap {
  Tensor real, imag;
};

// Unnormalized forward transform over the trailing two axes.
ComplexMap rfft2(const Tensor& x);
// Inverse with 1/(H*W) normalization. Imaginary parts of self-conjugate bins
// are ignored, so the output is real by construction.
Tensor irfft2(const ComplexMap& spectrum, int64_t height, int64_t width);

// Per-bin complex product. `filter` has the feature's shape or drops the
// leading (batch) axis, in which case it is shared across the batch.
ComplexMap complex_pointwise_filter(const ComplexMap& feature, const ComplexMap& filter);

namespace fft {

// In-place 1-D DFT (sign -1 forward, +1 inverse, no normalization).
// Radix-2 for powers of two, direct summation otherwise.
void transform(std::span<std::complex<double>> data, bool inverse);

bool is_power_of_two(int64_t n);

}  // namespace fft

}  // namespace dabformer
