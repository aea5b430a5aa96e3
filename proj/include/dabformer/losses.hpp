#pragma once

#include <memory>
#include <vector>

#include "dabformer/layers.hpp"
#include "dabformer/tensor.hpp"

namespace dabformer {

struct LossWeights {
  double l1 = 10.0;
  double perceptual = 0.6;
  double edge = 0.4;
  double ssim = 0.5;

  void validate() const;
};

// Frozen multi-stage feature pyramid. Stage outputs must not depend on any
// tensor that requires grad except the input.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor> features(const Tensor& image) const = 0;
};

// One stage returning the image itself.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::vector<Tensor> features(const Tensor& image) const override { return {image}; }
};

// Strided 3x3 conv + GELU stages (default 3 -> 16 -> 32 -> 64, stride 2),
// He-normal weights drawn from a fixed seed, zero biases, frozen.
class ConvPyramidExtractor final : public FeatureExtractor {
 public:
  explicit ConvPyramidExtractor(uint64_t seed = 0x5eed, std::vector<int64_t> widths = {16, 32, 64},
                                int64_t in_channels = 3);
  // Externally supplied stage weights [Cout, Cin, 3, 3] and biases [Cout].
  ConvPyramidExtractor(std::vector<Tensor> weights, std::vector<Tensor> biases);

  std::vector<Tensor> features(const Tensor& image) const override;
  const std::vector<Conv2d>& stages() const { return stages_; }

 private:
  std::vector<Conv2d> stages_;
};

Tensor l1_loss(const Tensor& o, const Tensor& gt);
Tensor perceptual_loss(const Tensor& o, const Tensor& gt, const FeatureExtractor& extractor);

inline constexpr double kSobelEps = 1e-8;
// Per-channel sqrt(Gx^2 + Gy^2 + eps) with edge-replicated borders.
Tensor sobel_magnitude(const Tensor& x);
Tensor edge_loss(const Tensor& o, const Tensor& gt);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// Local SSIM over every valid 11x11 window position, [B, C, H-10, W-10].
Tensor ssim_map(const Tensor& o, const Tensor& gt);
// Mean of ssim_map.
Tensor ssim(const Tensor& o, const Tensor& gt);
Tensor ssim_loss(const Tensor& o, const Tensor& gt);

struct LossTerms {
  Tensor total;
  Tensor l1, perceptual, edge, ssim;
};

LossTerms total_loss(const Tensor& o, const Tensor& gt, const LossWeights& weights,
                     const FeatureExtractor& extractor);

// 10 log10(1 / MSE) for [0, 1] images; +inf when MSE is 0.
double psnr(const Tensor& o, const Tensor& gt);
// PSNR restricted to pixels where mask[b, y, x] != 0 (all channels).
// `mask` is [B, H, W] or [H, W] (shared). NaN when the mask is empty.
double psnr_masked(const Tensor& o, const Tensor& gt, const Tensor& mask);
// Mean local SSIM over windows whose centre pixel is masked. NaN when none are.
double ssim_masked(const Tensor& o, const Tensor& gt, const Tensor& mask);

}  // namespace dabformer
