#include "dabformer/fdagn.hpp"

#include <cmath>

namespace dabformer {

std::string to_string(FfnKind kind) { return kind == FfnKind::kFdagn ? "fdagn" : "ffn"; }

FfnKind parse_ffn(const std::string& text) {
  if (text == "fdagn") return FfnKind::kFdagn;
  if (text == "ffn") return FfnKind::kPlain;
  throw Error("unknown feedforward kind '" + text + "' (expected ffn|fdagn)");
}

int64_t hidden_channels(int64_t channels, double expansion) {
  const auto half = static_cast<int64_t>(std::llround(static_cast<double>(channels) * expansion / 2.0));
  return std::max<int64_t>(2, 2 * half);
}

void FdagnConfig::validate() const {
  if (channels < 1) throw Error("fdagn: channels must be positive");
  if (!(expansion > 0.0)) throw Error("fdagn: expansion must be positive");
  if (patch < 1 || !fft::is_power_of_two(patch)) {
    throw Error("fdagn: patch size " + std::to_string(patch) + " is not a power of two");
  }
}

int64_t fdagn_param_count(const FdagnConfig& c) {
  const int64_t C = c.channels, h = c.hidden();
  if (c.kind == FfnKind::kPlain) return (C * h + h) + (h * C + C);
  const int64_t filter = 2 * h * c.patch * (c.patch / 2 + 1);
  return (C * h + h) + filter + (9 * h + h) + (h * h + h) + (h / 2 * C + C);
}

Tensor frequency_stage(const Tensor& x, const FreqFilter& filter, int64_t patch,
                       bool pad_to_patch) {
  if (x.rank() != 4) throw ShapeError("frequency_stage: expected [B, C, H, W], got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t ph = (patch - h % patch) % patch, pw = (patch - w % patch) % patch;
  if ((ph || pw) && !pad_to_patch) {
    throw ShapeError("frequency_stage: " + std::to_string(h) + "x" + std::to_string(w) +
                     " map is not divisible by patch size " + std::to_string(patch));
  }
  const Tensor padded = (ph || pw) ? pad_zero(x, ph, pw) : x;
  const Tensor patches = patchify(padded, patch);
  const ComplexMap spec = complex_pointwise_filter(rfft2(patches), {filter.real, filter.imag});
  const Tensor back = unpatchify(irfft2(spec, patch, patch), b, h + ph, w + pw);
  return (ph || pw) ? crop(back, h, w) : back;
}

Fdagn::Fdagn(ParamStore& params, const std::string& prefix, const FdagnConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  const int64_t C = config_.channels, h = config_.hidden();
  expand_ = make_conv(params, prefix + ".expand", C, h, 1, rng);
  if (config_.kind == FfnKind::kPlain) {
    out_ = make_conv(params, prefix + ".out", h, C, 1, rng);
    return;
  }
  const int64_t p = config_.patch;
  filter_.real = params.add(prefix + ".filter.real", Tensor::ones({h, p, p / 2 + 1}));
  filter_.imag = params.add(prefix + ".filter.imag", Tensor::zeros({h, p, p / 2 + 1}));
  mix_ = make_depthwise_separable(params, prefix + ".mix", h, 3, rng);
  out_ = make_conv(params, prefix + ".out", h / 2, C, 1, rng);
}

Fdagn::Trace Fdagn::trace(const Tensor& x) const {
  Trace t;
  t.expanded = expand_(x);
  if (config_.kind == FfnKind::kPlain) {
    t.gated = gelu(t.expanded);
    t.output = out_(t.gated);
    return t;
  }
  t.frequency = config_.bypass_frequency
                    ? t.expanded
                    : frequency_stage(t.expanded, filter_, config_.patch, config_.pad_to_patch);
  t.mixed = mix_(t.frequency);
  const int64_t half = config_.hidden() / 2;
  t.gated = mul(gelu(slice_channels(t.mixed, 0, half)), slice_channels(t.mixed, half, half));
  t.output = out_(t.gated);
  return t;
}

Tensor Fdagn::forward(const Tensor& x) const { return trace(x).output; }

namespace {

void zero_conv(const Conv2d& conv) {
  Tensor w = conv.weight, b = conv.bias;
  std::fill(w.data().begin(), w.data().end(), 0.0);
  if (b.defined()) std::fill(b.data().begin(), b.data().end(), 0.0);
}

}  // namespace

TransformerBlock::TransformerBlock(ParamStore& params, const std::string& prefix,
                                   const BlockConfig& config, Rng& rng)
    : norm1_(make_layer_norm(params, prefix + ".norm1", config.attention.channels)),
      fdfa_(params, prefix + ".attn", config.attention, rng),
      norm2_(make_layer_norm(params, prefix + ".norm2", config.ffn.channels)),
      ffn_(params, prefix + ".ffn", config.ffn, rng) {
  if (config.attention.channels != config.ffn.channels) {
    throw Error("block: attention and feedforward widths differ");
  }
}

TransformerBlock::Terms TransformerBlock::terms(const Tensor& x) const {
  Terms t;
  t.attention = fdfa_.branch(norm1_(x));
  t.ffn = ffn_.forward(norm2_(add(x, t.attention)));
  return t;
}

Tensor TransformerBlock::forward(const Tensor& x) const {
  const Tensor mid = add(x, fdfa_.branch(norm1_(x)));
  return add(mid, ffn_.forward(norm2_(mid)));
}

void TransformerBlock::zero_residual_branches() {
  zero_conv(fdfa_.output_projection());
  zero_conv(ffn_.output_projection());
}

}  // namespace dabformer
