#pragma once

#include <string>

#include "dabformer/ops.hpp"
#include "dabformer/param_store.hpp"
#include "dabformer/random.hpp"

namespace dabformer {

inline constexpr double kInitStd = 0.02;

struct Conv2d {
  Tensor weight;
  Tensor bias;
  Conv2dOptions options;

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }
  int64_t in_channels() const { return weight.dim(1) * options.groups; }
  int64_t out_channels() const { return weight.dim(0); }
};

// Registers "<name>.weight" (truncated normal, std 0.02) and "<name>.bias"
// (zeros). Padding defaults to ksize/2 so stride-1 convs keep their extent.
Conv2d make_conv(ParamStore& params, const std::string& name, int64_t in_channels,
                 int64_t out_channels, int ksize, Rng& rng, int groups = 1, int stride = 1);

inline Conv2d make_depthwise(ParamStore& params, const std::string& name, int64_t channels,
                             int ksize, Rng& rng) {
  return make_conv(params, name, channels, channels, ksize, rng, static_cast<int>(channels));
}

struct DepthwiseSeparable {
  Conv2d depthwise;
  Conv2d pointwise;

  Tensor operator()(const Tensor& x) const { return pointwise(depthwise(x)); }
};

DepthwiseSeparable make_depthwise_separable(ParamStore& params, const std::string& name,
                                            int64_t channels, int ksize, Rng& rng);

// Channel layer norm with gamma = 1, beta = 0 at init.
struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-6;

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

LayerNorm make_layer_norm(ParamStore& params, const std::string& name, int64_t channels);

}  // namespace dabformer
