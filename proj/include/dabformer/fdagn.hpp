#pragma once

#include <string>

#include "dabformer/fdfa.hpp"
#include "dabformer/layers.hpp"
#include "dabformer/spectral.hpp"

namespace dabformer {

enum class FfnKind {
  kFdagn,  // frequency-domain adaptive gating
  kPlain,  // 1x1 expand, GELU, 1x1 project
};

std::string to_string(FfnKind kind);
// ffn|fdagn
FfnKind parse_ffn(const std::string& text);

// 2 * round(C * r / 2), the nearest even integer to C * r.
int64_t hidden_channels(int64_t channels, double expansion);

struct FdagnConfig {
  int64_t channels = 8;
  double expansion = 2.66;
  int64_t patch = 8;
  FfnKind kind = FfnKind::kFdagn;
  // Feature maps whose extent is not a multiple of `patch` are zero padded
  // for the frequency stage and cropped afterwards. When false they raise.
  bool pad_to_patch = true;
  // Skip stages (2)-(6) entirely (test hook for the identity-init property).
  bool bypass_frequency = false;

  int64_t hidden() const { return hidden_channels(channels, expansion); }
  void validate() const;
};

int64_t fdagn_param_count(const FdagnConfig& config);

// Learnable per-bin complex weights [Ch, P, P/2 + 1], initialized to 1 + 0i.
struct FreqFilter {
  Tensor real;
  Tensor imag;
};

// Patchwise rfft2 -> filter -> irfft2 on [B, Ch, H, W].
Tensor frequency_stage(const Tensor& x, const FreqFilter& filter, int64_t patch,
                       bool pad_to_patch = true);

class Fdagn {
 public:
  Fdagn(ParamStore& params, const std::string& prefix, const FdagnConfig& config, Rng& rng);

  Tensor forward(const Tensor& x_norm) const;

  struct Trace {
    Tensor expanded;   // after the 1x1 expansion
    Tensor frequency;  // after patch reassembly (equals `expanded` when bypassed)
    Tensor mixed;      // after the depthwise-separable conv
    Tensor gated;      // gelu(path1) * path2
    Tensor output;
  };
  Trace trace(const Tensor& x_norm) const;

  const FdagnConfig& config() const { return config_; }
  const FreqFilter& filter() const { return filter_; }
  const Conv2d& output_projection() const { return out_; }

 private:
  FdagnConfig config_;
  Conv2d expand_;
  FreqFilter filter_;
  DepthwiseSeparable mix_;
  Conv2d out_;
};

// One encoder/decoder unit:
//   X~ = X + FDFA(LN(X)),  X' = X~ + FFN(LN(X~))
struct BlockConfig {
  FdfaConfig attention;
  FdagnConfig ffn;
};

class TransformerBlock {
 public:
  TransformerBlock(ParamStore& params, const std::string& prefix, const BlockConfig& config,
                   Rng& rng);

  Tensor forward(const Tensor& x) const;

  // Residual terms computed standalone: forward(x) == x + a + f where
  // a = FDFA branch of LN(x) and f = FFN of LN(x + a).
  struct Terms {
    Tensor attention;
    Tensor ffn;
  };
  Terms terms(const Tensor& x) const;

  // Zeroes both output projections (weights and biases), making the block
  // an identity map.
  void zero_residual_branches();

  const Fdfa& attention() const { return fdfa_; }
  const Fdagn& ffn() const { return ffn_; }

 private:
  LayerNorm norm1_;
  Fdfa fdfa_;
  LayerNorm norm2_;
  Fdagn ffn_;
};

}  // namespace dabformer
