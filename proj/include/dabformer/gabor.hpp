#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "dabformer/tensor.hpp"

namespace dabformer {

enum class Subband { kLL, kHL, kLH, kHH };

std::string to_string(Subband band);

inline constexpr double kLambdaMin = 0.1;
inline constexpr double kLambdaMax = 8.0;
inline constexpr double kLambdaInit = 2.0;

struct GaborSpec {
  double lambda = kLambdaInit;  // wavelength in pixels
  double theta = 0.0;           // orientation, radians
  double psi = 0.0;             // phase offset
  double sigma = 2.0 * std::numbers::pi;
  double gamma = 0.5;           // spatial aspect ratio
  int ksize = 7;
};

// Throws Error on an even/too-small kernel extent or non-positive sigma.
void validate(const GaborSpec& spec);

// G(x, y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda + psi)
//   x' =  x cos(theta) + y sin(theta)
//   y' = -x sin(theta) + y cos(theta)
// over integer offsets in [-(k-1)/2, (k-1)/2]; x runs along columns, y down
// the rows. Result is [ksize, ksize] indexed [y][x]. Lambda is clamped.
Tensor gabor_kernel(const GaborSpec& spec);

// Same kernel with a tensor wavelength (already clamped by the caller); the
// result is differentiable w.r.t. `lambda`. spec.lambda is ignored.
Tensor gabor_kernel(const Tensor& lambda, const GaborSpec& spec);

// Effective wavelength clamp(raw, kLambdaMin, kLambdaMax).
Tensor adaptive_lambda(const Tensor& raw);

// Matched orientation of a detail band: HL -> 0, LH -> pi/2, HH -> pi/4.
// LL has no orientation (it takes the convolution path) and throws.
double subband_orientation(Subband band);

// How detail bands are assigned orientations.
enum class OrientationStrategy {
  kMatched,         // HL 0, LH 90, HH 45 degrees
  kMisaligned,      // LH 0, HL 90, HH 45
  kUnified,         // every band uses one angle
  kRandom,          // seeded random angle per band, fixed at construction
  kMultiDirection,  // mean of the 0/30/45/90/180 degree kernels
  kConvOnly,        // learnable depthwise conv replaces the Gabor kernel
};

struct OrientationConfig {
  OrientationStrategy strategy = OrientationStrategy::kMatched;
  double unified_degrees = 0.0;
  uint64_t seed = 0;
};

// Orientations (radians) whose kernels are averaged for `band`. Empty for
// kConvOnly.
std::vector<double> band_orientations(Subband band, const OrientationConfig& config);

// Parses matched|misaligned|unified:<deg>|random|fused|conv.
OrientationConfig parse_orientation(const std::string& text);
std::string to_string(const OrientationConfig& config);

}  // namespace dabformer
