#include "dabformer/fdfa.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dabformer {

namespace {

constexpr Subband kDetailBands[3] = {Subband::kHL, Subband::kLH, Subband::kHH};

int detail_index(Subband band) {
  switch (band) {
    case Subband::kHL: return 0;
    case Subband::kLH: return 1;
    case Subband::kHH: return 2;
    case Subband::kLL: break;
  }
  throw Error("LL is not a detail band");
}

bool uses_bands(QueryPath q) { return q == QueryPath::kFused || q == QueryPath::kGaborOnly; }
bool uses_ll(QueryPath q) { return q == QueryPath::kFused || q == QueryPath::kWaveletOnly; }

}  // namespace

std::string to_string(QueryPath path) {
  switch (path) {
    case QueryPath::kPlain: return "plain";
    case QueryPath::kWaveletOnly: return "dwt";
    case QueryPath::kGaborOnly: return "gabor";
    case QueryPath::kFused: return "fused";
  }
  return "?";
}

QueryPath parse_query_path(const std::string& text) {
  if (text == "plain") return QueryPath::kPlain;
  if (text == "dwt") return QueryPath::kWaveletOnly;
  if (text == "gabor") return QueryPath::kGaborOnly;
  if (text == "fused") return QueryPath::kFused;
  throw Error("unknown query path '" + text + "' (expected plain|dwt|gabor|fused)");
}

LambdaConfig parse_lambda(const std::string& text) {
  LambdaConfig c;
  if (text == "adaptive") return c;
  if (text.rfind("fixed:", 0) == 0) {
    c.adaptive = false;
    try {
      std::size_t used = 0;
      c.fixed_value = std::stod(text.substr(6), &used);
      if (used != text.size() - 6) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error("bad fixed wavelength in '" + text + "'");
    }
    if (!(c.fixed_value > 0.0)) throw Error("fixed wavelength must be positive");
    return c;
  }
  throw Error("unknown wavelength mode '" + text + "' (expected adaptive|fixed:<v>)");
}

std::string to_string(const LambdaConfig& config) {
  if (config.adaptive) return "adaptive";
  std::ostringstream os;
  os << "fixed:" << config.fixed_value;
  return os.str();
}

void FdfaConfig::validate() const {
  if (channels < 1 || heads < 1) throw Error("fdfa: channels and heads must be positive");
  if (channels % heads != 0) {
    throw Error("fdfa: channels " + std::to_string(channels) + " not divisible by heads " +
                std::to_string(heads));
  }
  if (gabor_ksize < 3 || gabor_ksize % 2 == 0 || ll_ksize < 1 || ll_ksize % 2 == 0) {
    throw Error("fdfa: kernel sizes must be odd");
  }
}

int64_t fdfa_param_count(const FdfaConfig& c) {
  const int64_t C = c.channels;
  // q 1x1, kv 1x1, kv 3x3 depthwise, output 1x1, per-head temperature
  int64_t n = (C * C + C) + (2 * C * C + 2 * C) + (2 * C * 9 + 2 * C) + (C * C + C) + c.heads;
  if (uses_ll(c.query)) n += C * c.ll_ksize * c.ll_ksize + C + C * C + C;
  if (uses_bands(c.query)) {
    if (c.orientation.strategy == OrientationStrategy::kConvOnly) {
      n += 3 * (C * c.ll_ksize * c.ll_ksize + C);
    } else if (c.lambda.adaptive) {
      n += 3;
    }
  }
  return n;
}

int64_t attention_flops(int64_t channels, int64_t tokens, int64_t heads) {
  if (channels < 1 || tokens < 1 || heads < 1 || channels % heads != 0) {
    throw Error("attention_flops: arguments must be positive with heads dividing channels");
  }
  const int64_t d = channels / heads;
  return 2 * heads * d * d * tokens;
}

Tensor fdf_apply(const Tensor& x, const BandFilter& ll, const BandFilter& hl,
                 const BandFilter& lh, const BandFilter& hh) {
  Subbands s = dwt2(x);
  return idwt2(Subbands{ll(s.ll), hl(s.hl), lh(s.lh), hh(s.hh)});
}

Tensor depthwise_shared(const Tensor& x, const Tensor& kernel) {
  if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1)) {
    throw ShapeError("depthwise_shared: kernel must be square [K, K], got " +
                     shape_str(kernel.shape()));
  }
  const int64_t c = x.dim(1), k = kernel.dim(0);
  Tensor w = broadcast_to(reshape(kernel, {1, 1, k, k}), {c, 1, k, k});
  return conv2d(x, w, {}, Conv2dOptions{1, static_cast<int>(k / 2), static_cast<int>(c)});
}

Fdfa::Fdfa(ParamStore& params, const std::string& prefix, const FdfaConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  const int64_t C = config_.channels;
  q_proj_ = make_conv(params, prefix + ".q", C, C, 1, rng);
  kv_proj_ = make_conv(params, prefix + ".kv", C, 2 * C, 1, rng);
  kv_dw_ = make_depthwise(params, prefix + ".kv_dw", 2 * C, 3, rng);
  out_proj_ = make_conv(params, prefix + ".proj", C, C, 1, rng);
  const double t0 = config_.temperature_init > 0.0
                        ? config_.temperature_init
                        : std::sqrt(static_cast<double>(C / config_.heads));
  temperature_ = params.add(prefix + ".temperature", Tensor::full({config_.heads}, t0));
  if (uses_ll(config_.query)) {
    ll_path_ = make_depthwise_separable(params, prefix + ".ll", C, config_.ll_ksize, rng);
  }
  if (uses_bands(config_.query)) {
    for (Subband band : kDetailBands) {
      const int i = detail_index(band);
      const std::string tag = prefix + ".band_" + to_string(band);
      if (config_.orientation.strategy == OrientationStrategy::kConvOnly) {
        band_conv_[i] = make_depthwise(params, tag, C, config_.ll_ksize, rng);
      } else if (config_.lambda.adaptive) {
        raw_lambda_[i] = params.add(prefix + ".lambda_" + to_string(band),
                                    Tensor::full({1}, kLambdaInit));
      }
    }
  }
}

Tensor Fdfa::band_lambda(Subband band) const {
  const int i = detail_index(band);
  if (config_.lambda.adaptive) {
    if (!raw_lambda_[i].defined()) throw Error("fdfa: no learnable wavelength for this config");
    return adaptive_lambda(raw_lambda_[i]);
  }
  return Tensor::full({1}, std::clamp(config_.lambda.fixed_value, kLambdaMin, kLambdaMax));
}

Tensor Fdfa::band_kernel(Subband band) const {
  const std::vector<double> thetas = band_orientations(band, config_.orientation);
  if (thetas.empty()) throw Error("fdfa: conv-only strategy has no Gabor kernel");
  const Tensor lambda = band_lambda(band);
  Tensor acc;
  for (double theta : thetas) {
    GaborSpec spec;
    spec.theta = theta;
    spec.ksize = config_.gabor_ksize;
    Tensor k = gabor_kernel(lambda, spec);
    acc = acc.defined() ? add(acc, k) : k;
  }
  if (thetas.size() > 1) acc = scale(acc, 1.0 / static_cast<double>(thetas.size()));
  return acc;
}

BandFilter Fdfa::detail_filter(Subband band) const {
  const int i = detail_index(band);
  if (band_conv_[i]) {
    Conv2d conv = *band_conv_[i];
    return [conv](const Tensor& t) { return conv(t); };
  }
  Tensor kernel = band_kernel(band);
  return [kernel](const Tensor& t) { return depthwise_shared(t, kernel); };
}

Tensor Fdfa::query_features(const Tensor& x) const {
  const auto identity = [](const Tensor& t) { return t; };
  switch (config_.query) {
    case QueryPath::kPlain:
      return x;
    case QueryPath::kWaveletOnly: {
      const DepthwiseSeparable ll = *ll_path_;
      return fdf_apply(x, ll, identity, identity, identity);
    }
    case QueryPath::kFused: {
      const DepthwiseSeparable ll = *ll_path_;
      return fdf_apply(x, ll, detail_filter(Subband::kHL), detail_filter(Subband::kLH),
                       detail_filter(Subband::kHH));
    }
    case QueryPath::kGaborOnly: {
      Tensor acc;
      for (Subband band : kDetailBands) {
        Tensor r = detail_filter(band)(x);
        acc = acc.defined() ? add(acc, r) : r;
      }
      return scale(acc, 1.0 / 3.0);
    }
  }
  return x;
}

Fdfa::Trace Fdfa::trace(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != config_.channels) {
    throw ShapeError("fdfa: expected [B, " + std::to_string(config_.channels) +
                     ", H, W] input, got " + shape_str(x.shape()));
  }
  const int64_t b = x.dim(0), c = config_.channels, h = x.dim(2), w = x.dim(3);
  const int64_t heads = config_.heads, d = c / heads, m = h * w;
  Trace t;
  t.q = q_proj_(query_features(x));
  Tensor kv = kv_dw_(kv_proj_(x));
  t.k = slice_channels(kv, 0, c);
  t.v = slice_channels(kv, c, c);
  const Tensor qh = reshape(t.q, {b, heads, d, m});
  const Tensor kh = reshape(t.k, {b, heads, d, m});
  const Tensor vh = reshape(t.v, {b, heads, d, m});
  Tensor logits = div(matmul_nt(qh, kh), reshape(temperature_, {1, heads, 1, 1}));
  t.attention = softmax(logits, -1);
  Tensor mixed = reshape(matmul(t.attention, vh), {b, c, h, w});
  t.branch = out_proj_(mixed);
  return t;
}

Tensor Fdfa::branch(const Tensor& x_norm) const { return trace(x_norm).branch; }

Tensor Fdfa::forward(const Tensor& x_norm) const { return add(branch(x_norm), x_norm); }

}  // namespace dabformer
