#pragma once

// Independent scalar reference implementations. Nothing here calls the
// library's ops; inputs and outputs are plain tensors used as containers.

#include <array>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "dabformer/tensor.hpp"

namespace dabformer::oracle {

// Six-loop cross-correlation with zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad, int groups);

// Full 2-D DFT of one real H x W plane by double summation, forward sign -1.
std::vector<std::complex<double>> dft2(const double* plane, int64_t h, int64_t w);

// Inverse of a full complex spectrum (1/(HW)), real part.
std::vector<double> idft2_real(const std::vector<std::complex<double>>& spec, int64_t h, int64_t w);

// Circular 2-D convolution of one plane with a kernel of the same size.
std::vector<double> circular_conv(const std::vector<double>& x, const std::vector<double>& k,
                                  int64_t h, int64_t w);

// One 2x2 Haar block: {ll, hl, lh, hh}.
std::array<double, 4> haar_block(double a, double b, double c, double d);

// G(x, y) of the Gabor function, evaluated from first principles.
double gabor_value(int x, int y, double lambda, double theta, double psi, double sigma, double gamma);

// Exact GELU.
double gelu(double x);

// Per-channel Sobel magnitude with replicated borders, [B, C, H, W].
Tensor sobel_magnitude(const Tensor& x, double eps);

// Mean local SSIM (11x11 Gaussian, sigma 1.5, valid windows).
double ssim(const Tensor& a, const Tensor& b);

double l1(const Tensor& a, const Tensor& b);

// Conv-pyramid perceptual loss: stride-2 3x3 convs with GELU, sum over stages
// of mean |f(gt) - f(o)|.
double perceptual(const Tensor& o, const Tensor& gt, const std::vector<Tensor>& weights,
                  const std::vector<Tensor>& biases);

double psnr(const Tensor& a, const Tensor& b);

// Weights of one FDFA instance with a fused query path and one head.
struct FdfaWeights {
  Tensor q_w, q_b;            // [C, C, 1, 1], [C]
  Tensor kv_w, kv_b;          // [2C, C, 1, 1], [2C]
  Tensor kvdw_w, kvdw_b;      // [2C, 1, 3, 3], [2C]
  Tensor proj_w, proj_b;      // [C, C, 1, 1], [C]
  Tensor ll_dw_w, ll_dw_b;    // [C, 1, k, k], [C]
  Tensor ll_pw_w, ll_pw_b;    // [C, C, 1, 1], [C]
  double lambda[3];           // HL, LH, HH (already clamped)
  double theta[3];
  int gabor_ksize = 7;
  double temperature = 1.0;
};

// Step-by-step evaluation of the query fusion, channel attention and
// residual output for a [1, C, H, W] input.
Tensor fdfa_forward(const Tensor& x, const FdfaWeights& w);

// Strict P6 reader following the netpbm grammar: returns [3, H, W] in [0, 1].
Tensor parse_ppm(const std::filesystem::path& path);

// Closed-form cosine schedule.
double cosine_lr(int64_t i, int64_t n, double lr_init, double lr_min);

}  // namespace dabformer::oracle
