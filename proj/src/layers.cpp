#include "dabformer/layers.hpp"

namespace dabformer {

Conv2d make_conv(ParamStore& params, const std::string& name, int64_t in_channels,
                 int64_t out_channels, int ksize, Rng& rng, int groups, int stride) {
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("make_conv(" + name + "): channels not divisible by groups");
  }
  Tensor w({out_channels, in_channels / groups, ksize, ksize});
  for (double& v : w.data()) v = rng.truncated_normal(kInitStd);
  Conv2d conv;
  conv.weight = params.add(name + ".weight", w);
  conv.bias = params.add(name + ".bias", Tensor::zeros({out_channels}));
  conv.options = Conv2dOptions{stride, ksize / 2, groups};
  return conv;
}

DepthwiseSeparable make_depthwise_separable(ParamStore& params, const std::string& name,
                                            int64_t channels, int ksize, Rng& rng) {
  return {make_depthwise(params, name + ".dw", channels, ksize, rng),
          make_conv(params, name + ".pw", channels, channels, 1, rng)};
}

LayerNorm make_layer_norm(ParamStore& params, const std::string& name, int64_t channels) {
  LayerNorm ln;
  ln.gamma = params.add(name + ".gamma", Tensor::ones({channels}));
  ln.beta = params.add(name + ".beta", Tensor::zeros({channels}));
  return ln;
}

}  // namespace dabformer
