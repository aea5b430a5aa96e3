#include "dabformer/gabor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dabformer/ops.hpp"
#include "dabformer/random.hpp"
#include "op_util.hpp"

namespace dabformer {

std::string to_string(Subband band) {
  switch (band) {
    case Subband::kLL: return "LL";
    case Subband::kHL: return "HL";
    case Subband::kLH: return "LH";
    case Subband::kHH: return "HH";
  }
  return "?";
}

void validate(const GaborSpec& spec) {
  if (spec.ksize < 3 || spec.ksize % 2 == 0) {
    throw Error("gabor: kernel size must be odd and >= 3, got " + std::to_string(spec.ksize));
  }
  if (!(spec.sigma > 0.0)) throw Error("gabor: sigma must be positive");
}

namespace {

struct KernelEval {
  std::vector<double> value;
  std::vector<double> d_lambda;
};

KernelEval evaluate(double lambda, const GaborSpec& spec) {
  validate(spec);
  const int k = spec.ksize, r = k / 2;
  KernelEval e;
  e.value.resize(static_cast<std::size_t>(k * k));
  e.d_lambda.resize(e.value.size());
  const double ct = std::cos(spec.theta), st = std::sin(spec.theta);
  const double inv2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
  const double g2 = spec.gamma * spec.gamma;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double xp = x * ct + y * st;
      const double yp = -x * st + y * ct;
      const double env = std::exp(-(xp * xp + g2 * yp * yp) * inv2s2);
      const double phase = two_pi * xp / lambda + spec.psi;
      const std::size_t idx = static_cast<std::size_t>((y + r) * k + (x + r));
      e.value[idx] = env * std::cos(phase);
      e.d_lambda[idx] = env * std::sin(phase) * two_pi * xp / (lambda * lambda);
    }
  }
  return e;
}

}  // namespace

Tensor gabor_kernel(const GaborSpec& spec) {
  const double lambda = std::clamp(spec.lambda, kLambdaMin, kLambdaMax);
  KernelEval e = evaluate(lambda, spec);
  return Tensor({spec.ksize, spec.ksize}, std::move(e.value));
}

Tensor gabor_kernel(const Tensor& lambda, const GaborSpec& spec) {
  if (!lambda.defined() || lambda.numel() != 1) {
    throw ShapeError("gabor_kernel: lambda must be a single scalar");
  }
  const double lv = lambda.item();
  if (!(lv > 0.0)) throw Error("gabor_kernel: wavelength must be positive");
  KernelEval e = evaluate(lv, spec);
  Tensor out({spec.ksize, spec.ksize}, std::move(e.value));
  if (autograd::any_requires_grad({&lambda})) {
    detail::ImplPtr li = lambda.impl(), oi = out.impl();
    autograd::record({out}, [li, oi, d = std::move(e.d_lambda)] {
      double acc = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) acc += oi->grad[i] * d[i];
      autograd::grad_buffer(li)[0] += acc;
    });
  }
  return detail::finish(std::move(out), "gabor_kernel");
}

Tensor adaptive_lambda(const Tensor& raw) { return clamp(raw, kLambdaMin, kLambdaMax); }

double subband_orientation(Subband band) {
  switch (band) {
    case Subband::kHL: return 0.0;
    case Subband::kLH: return std::numbers::pi / 2.0;
    case Subband::kHH: return std::numbers::pi / 4.0;
    case Subband::kLL: break;
  }
  throw Error("subband_orientation: LL has no Gabor orientation (it uses the convolution path)");
}

std::vector<double> band_orientations(Subband band, const OrientationConfig& config) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  if (band == Subband::kLL) throw Error("band_orientations: LL is not a detail band");
  switch (config.strategy) {
    case OrientationStrategy::kMatched:
      return {subband_orientation(band)};
    case OrientationStrategy::kMisaligned:
      if (band == Subband::kHL) return {90.0 * kDeg};
      if (band == Subband::kLH) return {0.0};
      return {45.0 * kDeg};
    case OrientationStrategy::kUnified:
      return {config.unified_degrees * kDeg};
    case OrientationStrategy::kRandom: {
      Rng rng(Rng::mix(config.seed, static_cast<uint64_t>(band)));
      return {rng.uniform(0.0, std::numbers::pi)};
    }
    case OrientationStrategy::kMultiDirection:
      return {0.0, 30.0 * kDeg, 45.0 * kDeg, 90.0 * kDeg, 180.0 * kDeg};
    case OrientationStrategy::kConvOnly:
      return {};
  }
  return {};
}

OrientationConfig parse_orientation(const std::string& text) {
  OrientationConfig c;
  if (text == "matched") {
    c.strategy = OrientationStrategy::kMatched;
  } else if (text == "misaligned") {
    c.strategy = OrientationStrategy::kMisaligned;
  } else if (text.rfind("unified:", 0) == 0) {
    c.strategy = OrientationStrategy::kUnified;
    try {
      std::size_t used = 0;
      c.unified_degrees = std::stod(text.substr(8), &used);
      if (used != text.size() - 8) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error("bad unified orientation angle in '" + text + "'");
    }
  } else if (text == "random") {
    c.strategy = OrientationStrategy::kRandom;
  } else if (text == "fused") {
    c.strategy = OrientationStrategy::kMultiDirection;
  } else if (text == "conv") {
    c.strategy = OrientationStrategy::kConvOnly;
  } else {
    throw Error("unknown Gabor orientation strategy '" + text +
                "' (expected matched|misaligned|unified:<deg>|random|fused|conv)");
  }
  return c;
}

std::string to_string(const OrientationConfig& config) {
  switch (config.strategy) {
    case OrientationStrategy::kMatched: return "matched";
    case OrientationStrategy::kMisaligned: return "misaligned";
    case OrientationStrategy::kUnified: {
      std::ostringstream os;
      os << "unified:" << config.unified_degrees;
      return os.str();
    }
    case OrientationStrategy::kRandom: return "random";
    case OrientationStrategy::kMultiDirection: return "fused";
    case OrientationStrategy::kConvOnly: return "conv";
  }
  return "?";
}

}  // namespace dabformer
