#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>

#include "dabformer/gabor.hpp"
#include "dabformer/layers.hpp"
#include "dabformer/spectral.hpp"

namespace dabformer {

// Source of the attention query.
enum class QueryPath {
  kPlain,        // Q from a 1x1 conv of the input
  kWaveletOnly,  // DWT, LL conv path, detail bands passed through, inverse DWT
  kGaborOnly,    // oriented Gabor responses of the full-resolution input
  kFused,        // DWT with Gabor-enhanced detail bands (frequency domain fusion)
};

std::string to_string(QueryPath path);
// plain|dwt|gabor|fused
QueryPath parse_query_path(const std::string& text);

struct LambdaConfig {
  bool adaptive = true;
  double fixed_value = kLambdaInit;
};

// adaptive|fixed:<v>
LambdaConfig parse_lambda(const std::string& text);
std::string to_string(const LambdaConfig& config);

struct FdfaConfig {
  int64_t channels = 8;
  int64_t heads = 1;
  int gabor_ksize = 7;
  int ll_ksize = 3;
  QueryPath query = QueryPath::kFused;
  OrientationConfig orientation;
  LambdaConfig lambda;
  // <= 0 selects sqrt(channels / heads).
  double temperature_init = 0.0;

  void validate() const;
};

// Parameter count implied by a config (used to cross-check registration).
int64_t fdfa_param_count(const FdfaConfig& config);

// Multiply count of the Q K^T and A V products: 2 * h * (C/h)^2 * M.
int64_t attention_flops(int64_t channels, int64_t tokens, int64_t heads);

using BandFilter = std::function<Tensor(const Tensor&)>;

// DWT, per-band filtering, inverse DWT.
Tensor fdf_apply(const Tensor& x, const BandFilter& ll, const BandFilter& hl,
                 const BandFilter& lh, const BandFilter& hh);

// Depthwise application of one [K, K] kernel to every channel (zero padding).
Tensor depthwise_shared(const Tensor& x, const Tensor& kernel);

class Fdfa {
 public:
  Fdfa(ParamStore& params, const std::string& prefix, const FdfaConfig& config, Rng& rng);

  // Eq.-5 form: projection of the attention output plus the residual x_norm.
  Tensor forward(const Tensor& x_norm) const;
  // The projected attention output alone (what the block adds to its input).
  Tensor branch(const Tensor& x_norm) const;

  // Query features before the 1x1 projection (frequency domain fusion for
  // the fused path).
  Tensor query_features(const Tensor& x) const;

  // Intermediates of one forward pass, for inspection.
  struct Trace {
    Tensor q, k, v;
    Tensor attention;  // [B, heads, C/h, C/h]
    Tensor branch;
  };
  Trace trace(const Tensor& x_norm) const;

  // Effective Gabor kernel [K, K] for a detail band (fused path) or for the
  // i-th orientation (Gabor-only path, indexed HL/LH/HH).
  Tensor band_kernel(Subband band) const;
  // Effective wavelength used for `band` (clamped raw value or the fixed one).
  Tensor band_lambda(Subband band) const;

  const FdfaConfig& config() const { return config_; }
  const Conv2d& output_projection() const { return out_proj_; }

 private:
  BandFilter detail_filter(Subband band) const;

  FdfaConfig config_;
  Conv2d q_proj_;
  Conv2d kv_proj_;
  Conv2d kv_dw_;
  Conv2d out_proj_;
  Tensor temperature_;  // [heads]
  std::optional<DepthwiseSeparable> ll_path_;
  std::array<Tensor, 3> raw_lambda_;          // HL, LH, HH (adaptive only)
  std::array<std::optional<Conv2d>, 3> band_conv_;  // conv-only strategy
};

}  // namespace dabformer
