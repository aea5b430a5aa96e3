#include "dabformer/suites.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "dabformer/grad_check.hpp"
#include "dabformer/harness.hpp"
#include "dabformer/model.hpp"
#include "dabformer/ops.hpp"
#include "dabformer/oracles.hpp"
#include "dabformer/training.hpp"

namespace dabformer::verify {

namespace {

namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

Tensor randn(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
double max_abs_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a.data(), b.data()); }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                    [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << std::scientific << v;
  return os.str();
}

// Collects checks for one suite; exceptions become failures.
class Recorder {
 public:
  explicit Recorder(std::string suite) : suite_(std::move(suite)) {}

  void check(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    CheckResult r{suite_, name, false, ""};
    try {
      auto [ok, detail] = fn();
      r.passed = ok;
      r.detail = std::move(detail);
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    autograd::clear_tape();
    results_.push_back(std::move(r));
  }

  // Measured value against an upper bound.
  void bound(const std::string& name, double bound, const std::function<double()>& fn) {
    check(name, [&] {
      const double v = fn();
      return std::pair{v <= bound, sci(v) + " <= " + sci(bound)};
    });
  }

  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  std::string suite_;
  std::vector<CheckResult> results_;
};

std::pair<bool, std::string> grad_ok(const GradCheckReport& r, double tol) {
  return {r.passed && r.max_rel_error <= tol,
          "rel " + sci(r.max_rel_error) + " (abs " + sci(r.max_abs_error) + ", " +
              std::to_string(r.checked) + " elems) <= " + sci(tol)};
}

// Relative errors use max(|analytic|, |numeric|, floor) as denominator. Central
// differences at h = 1e-5 carry ~1e-10 absolute roundoff for O(10) probes, so
// gradients below the floor are judged on absolute error instead.
constexpr double kOpFloor = 1e-5;
// Whole-network probes sum thousands of terms; their roundoff is ~1e-9.
constexpr double kNetworkFloor = 1e-4;

GradCheckReport gcheck(const std::function<Tensor()>& f, const Tensor& x, double tol,
                       double floor = kOpFloor, int64_t max_elements = 0) {
  GradCheckOptions o;
  o.tolerance = tol;
  o.floor = floor;
  o.max_elements = max_elements;
  return grad_check(f, x, o);
}

// Scalar probe of a tensor-valued function: sum(f(x) * w) with fixed random w.
Tensor probe(const Tensor& y, uint64_t seed) {
  Rng rng(seed);
  Tensor w = randn(y.shape(), rng);
  return sum(mul(y, w));
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("dabformer_verify_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> tensor_core() {
  Recorder r("tensor-core");
  Rng rng(11);
  r.bound("conv2d_vs_direct_loop", 1e-12, [&] {
    const Tensor x = randn({1, 2, 5, 5}, rng), w = randn({3, 2, 3, 3}, rng), b = randn({3}, rng);
    return max_abs_diff(conv2d(x, w, b, {1, 1, 1}), oracle::conv2d(x, w, b, 1, 1, 1));
  });
  r.bound("conv2d_strided_grouped_vs_direct_loop", 1e-12, [&] {
    const Tensor x = randn({2, 4, 7, 6}, rng), w = randn({6, 2, 3, 3}, rng), b = randn({6}, rng);
    return max_abs_diff(conv2d(x, w, b, {2, 1, 2}), oracle::conv2d(x, w, b, 2, 1, 2));
  });
  r.bound("conv2d_depthwise_vs_direct_loop", 1e-12, [&] {
    const Tensor x = randn({1, 4, 6, 6}, rng), w = randn({4, 1, 3, 3}, rng);
    return max_abs_diff(conv2d(x, w, {}, {1, 1, 4}), oracle::conv2d(x, w, Tensor(), 1, 1, 4));
  });
  r.bound("layer_norm_grad_fd", 1e-6, [&] {
    const Tensor x = randn({1, 4, 2, 2}, rng);
    const Tensor g = randn({4}, rng), b = randn({4}, rng);
    return gcheck([&] { return probe(layer_norm(x, g, b, 1e-6), 1); }, x, 1e-6).max_rel_error;
  });
  r.bound("softmax_closed_form", 1e-15, [&] {
    const Tensor y = softmax(Tensor({2}, {0.0, std::log(3.0)}), 0);
    return std::max(std::abs(y.data()[0] - 0.25), std::abs(y.data()[1] - 0.75));
  });
  r.bound("gelu_grad_fd", 1e-6, [&] {
    const Tensor x({4}, {-2.0, -0.5, 0.3, 4.0});
    return gcheck([&] { return probe(gelu(x), 2); }, x, 1e-6).max_rel_error;
  });
  r.bound("gelu_vs_scalar", 1e-15, [&] {
    const Tensor x({4}, {-2.0, -0.5, 0.3, 4.0});
    const Tensor y = gelu(x);
    double m = 0.0;
    for (int i = 0; i < 4; ++i) m = std::max(m, std::abs(y.data()[i] - oracle::gelu(x.data()[i])));
    return m;
  });
  r.check("sum_of_squares_grad", [&] {
    Tensor x({3}, {1.0, 2.0, 3.0});
    x.set_requires_grad(true);
    autograd::backward(sum(square(x)));
    const double analytic = max_abs_diff(x.grad(), std::vector<double>{2.0, 4.0, 6.0});
    x.zero_grad();
    const auto rep = gcheck([&] { return sum(square(x)); }, x, 1e-8);
    return std::pair{analytic == 0.0 && rep.max_abs_error <= 1e-8,
                     "analytic err " + sci(analytic) + ", fd abs " + sci(rep.max_abs_error) + " <= 1e-8"};
  });
  r.check("pixel_shuffle_roundtrip_bitwise", [&] {
    const Tensor x = randn({2, 3, 8, 8}, rng);
    const bool ok = bitwise_equal(pixel_shuffle(pixel_unshuffle(x, 2), 2), x);
    return std::pair{ok, ok ? "bitwise equal" : "mismatch"};
  });
  return r.take();
}

// Every differentiable op over three random shapes.
std::vector<CheckResult> gradients() {
  Recorder r("gradients");
  constexpr double tol = 1e-4;
  struct UnaryCase {
    const char* name;
    std::function<Tensor(const Tensor&)> f;
    double lo, hi;
  };
  const std::vector<Shape> shapes{{5}, {2, 3}, {1, 2, 3, 4}};
  const std::vector<UnaryCase> unary{
      {"scale", [](const Tensor& x) { return scale(x, -1.7); }, -2, 2},
      {"add_scalar", [](const Tensor& x) { return add_scalar(x, 0.3); }, -2, 2},
      {"square", [](const Tensor& x) { return square(x); }, -2, 2},
      {"sqrt", [](const Tensor& x) { return sqrt(x); }, 0.5, 2},
      {"abs", [](const Tensor& x) { return abs(x); }, 0.2, 2},
      {"exp", [](const Tensor& x) { return exp(x); }, -1, 1},
      {"gelu", [](const Tensor& x) { return gelu(x); }, -3, 3},
      {"clamp", [](const Tensor& x) { return clamp(x, -0.5, 0.5); }, -2, 2},
      {"sum", [](const Tensor& x) { return scale(sum(x), 1.3); }, -2, 2},
      {"mean", [](const Tensor& x) { return scale(mean(x), 1.3); }, -2, 2},
      {"l2_norm", [](const Tensor& x) { return l2_norm(x); }, 0.2, 2},
  };
  uint64_t seed = 100;
  for (const auto& c : unary) {
    r.check(std::string(c.name), [&] {
      double worst = 0.0;
      for (const Shape& s : shapes) {
        Rng rng(++seed);
        Tensor x = uniform(s, rng, c.lo, c.hi);
        // keep clamp inputs away from the kinks
        if (std::string(c.name) == "clamp")
          for (double& v : x.data())
            if (std::abs(std::abs(v) - 0.5) < 0.05) v += 0.2;
        if (std::string(c.name) == "abs")
          for (std::size_t i = 0; i < x.data().size(); i += 2) x.data()[i] = -x.data()[i];
        const auto rep = gcheck([&] { return probe(c.f(x), seed); }, x, tol);
        worst = std::max(worst, rep.max_rel_error);
      }
      return std::pair{worst <= tol, "worst rel " + sci(worst) + " <= " + sci(tol)};
    });
  }

  using Binary = std::function<Tensor(const Tensor&, const Tensor&)>;
  const std::vector<std::pair<const char*, Binary>> binary{
      {"add", [](const Tensor& a, const Tensor& b) { return add(a, b); }},
      {"sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }},
      {"mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }},
      {"div", [](const Tensor& a, const Tensor& b) { return div(a, b); }},
  };
  for (const auto& [name, f] : binary) {
    r.check(name, [&] {
      double worst = 0.0;
      for (const Shape& s : shapes) {
        Rng rng(++seed);
        Tensor a = uniform(s, rng, 0.5, 2.0), b = uniform(s, rng, 0.5, 2.0);
        for (const Tensor* x : {&a, &b})
          worst = std::max(worst, gcheck([&] { return probe(f(a, b), seed); }, *x, tol).max_rel_error);
      }
      return std::pair{worst <= tol, "worst rel " + sci(worst)};
    });
  }

  const auto multi = [&](const std::string& name, const std::vector<std::function<std::vector<Tensor>(Rng&)>>& makers,
                         const std::function<Tensor(const std::vector<Tensor>&)>& f, double floor = kOpFloor) {
    r.check(name, [&] {
      double worst = 0.0;
      for (const auto& make : makers) {
        Rng rng(++seed);
        const std::vector<Tensor> in = make(rng);
        for (const Tensor& x : in)
          worst = std::max(worst, gcheck([&] { return probe(f(in), seed); }, x, tol, floor).max_rel_error);
      }
      return std::pair{worst <= tol, "worst rel " + sci(worst) + " over " + std::to_string(makers.size()) + " shapes"};
    });
  };
  const auto shapes_of = [](std::vector<std::vector<Shape>> sets) {
    std::vector<std::function<std::vector<Tensor>(Rng&)>> out;
    for (auto set : sets)
      out.push_back([set](Rng& rng) {
        std::vector<Tensor> v;
        for (const Shape& s : set) v.push_back(randn(s, rng));
        return v;
      });
    return out;
  };

  multi("matmul", shapes_of({{{3, 4}, {4, 2}}, {{2, 3, 5}, {2, 5, 4}}, {{1, 2, 2, 3}, {1, 2, 3, 3}}}),
        [](const auto& v) { return matmul(v[0], v[1]); });
  multi("matmul_nt", shapes_of({{{3, 4}, {2, 4}}, {{2, 3, 5}, {2, 4, 5}}, {{1, 2, 2, 3}, {1, 2, 3, 3}}}),
        [](const auto& v) { return matmul_nt(v[0], v[1]); });
  multi("transpose", shapes_of({{{3, 4}}, {{2, 3, 5}}, {{1, 2, 2, 3}}}), [](const auto& v) { return transpose(v[0]); });
  multi("reshape", shapes_of({{{3, 4}}, {{2, 3, 4}}, {{1, 2, 2, 3}}}),
        [](const auto& v) { return reshape(v[0], {v[0].numel() / 2, 2}); });
  multi("broadcast_to", shapes_of({{{1, 3}}, {{2, 1, 4}}, {{1, 2, 1, 1}}}), [](const auto& v) {
    Shape s = v[0].shape();
    for (auto& d : s) d = d == 1 ? 3 : d;
    return broadcast_to(v[0], s);
  });
  multi("concat_channels", shapes_of({{{1, 2, 3, 3}, {1, 1, 3, 3}}, {{2, 1, 2, 2}, {2, 3, 2, 2}}, {{1, 2, 4, 1}, {1, 2, 4, 1}}}),
        [](const auto& v) { return concat_channels(v); });
  multi("slice_channels", shapes_of({{{1, 4, 3, 3}}, {{2, 3, 2, 2}}, {{1, 5, 4, 1}}}),
        [](const auto& v) { return slice_channels(v[0], 1, 2); });
  multi("split_channels", shapes_of({{{1, 4, 3, 3}}, {{2, 3, 2, 2}}, {{1, 5, 4, 1}}}), [](const auto& v) {
    const int64_t c = v[0].dim(1);
    const std::vector<int64_t> sizes{1, c - 1};
    auto parts = split_channels(v[0], sizes);
    return add(sum(square(parts[0])), sum(mul(parts[1], parts[1])));
  });
  multi("conv2d", shapes_of({{{1, 2, 5, 5}, {3, 2, 3, 3}, {3}}, {{2, 4, 6, 5}, {4, 2, 3, 3}, {4}}, {{1, 3, 4, 4}, {2, 3, 1, 1}, {2}}}),
        [](const auto& v) {
          const int groups = static_cast<int>(v[0].dim(1) / v[1].dim(1));
          return conv2d(v[0], v[1], v[2], {v[1].dim(2) == 3 && groups == 2 ? 2 : 1, static_cast<int>(v[1].dim(2) / 2), groups});
        });
  multi("layer_norm", shapes_of({{{1, 4, 2, 2}, {4}, {4}}, {{2, 3, 3, 1}, {3}, {3}}, {{1, 6, 2, 3}, {6}, {6}}}),
        [](const auto& v) { return layer_norm(v[0], v[1], v[2], 1e-6); });
  multi("softmax", shapes_of({{{4}}, {{2, 5}}, {{2, 3, 4}}}), [](const auto& v) { return softmax(v[0], -1); });
  multi("pixel_unshuffle", shapes_of({{{1, 1, 4, 4}}, {{2, 3, 4, 2}}, {{1, 2, 6, 6}}}),
        [](const auto& v) { return pixel_unshuffle(v[0], 2); });
  multi("pixel_shuffle", shapes_of({{{1, 4, 2, 2}}, {{2, 8, 1, 3}}, {{1, 12, 3, 3}}}),
        [](const auto& v) { return pixel_shuffle(v[0], 2); });
  multi("pad_reflect", shapes_of({{{1, 1, 4, 4}}, {{2, 2, 3, 5}}, {{1, 3, 5, 3}}}),
        [](const auto& v) { return pad_reflect(v[0], 2, 1); });
  multi("pad_zero", shapes_of({{{1, 1, 4, 4}}, {{2, 2, 3, 5}}, {{1, 3, 5, 3}}}), [](const auto& v) { return pad_zero(v[0], 2, 3); });
  multi("pad_replicate", shapes_of({{{1, 1, 4, 4}}, {{2, 2, 3, 5}}, {{1, 3, 5, 3}}}),
        [](const auto& v) { return pad_replicate(v[0], 1); });
  multi("crop", shapes_of({{{1, 1, 4, 4}}, {{2, 2, 3, 5}}, {{1, 3, 5, 3}}}), [](const auto& v) { return crop(v[0], 2, 2); });
  multi("patchify", shapes_of({{{1, 1, 4, 4}}, {{2, 2, 4, 8}}, {{1, 3, 8, 4}}}), [](const auto& v) { return patchify(v[0], 2); });
  multi("unpatchify", shapes_of({{{4, 1, 2, 2}}, {{16, 2, 2, 2}}, {{8, 3, 2, 2}}}), [](const auto& v) {
    const int64_t n = v[0].dim(0);
    const int64_t b = n == 16 ? 2 : 1, tiles = n / b;
    const int64_t th = tiles == 4 ? 2 : (tiles == 8 ? 4 : 2), tw = tiles / th;
    return unpatchify(v[0], b, th * 2, tw * 2);
  });
  multi("dwt2", shapes_of({{{1, 1, 2, 2}}, {{2, 2, 4, 6}}, {{1, 3, 8, 8}}}), [](const auto& v) {
    const Subbands s = dwt2(v[0]);
    const std::vector<Tensor> parts{s.ll, scale(s.hl, 0.7), scale(s.lh, -1.3), scale(s.hh, 2.1)};
    return concat_channels(parts);
  });
  multi("idwt2", shapes_of({{{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}},
                            {{2, 2, 2, 3}, {2, 2, 2, 3}, {2, 2, 2, 3}, {2, 2, 2, 3}},
                            {{1, 3, 4, 4}, {1, 3, 4, 4}, {1, 3, 4, 4}, {1, 3, 4, 4}}}),
        [](const auto& v) { return idwt2({v[0], v[1], v[2], v[3]}); });
  multi("rfft2", shapes_of({{{1, 1, 4, 4}}, {{2, 2, 3, 5}}, {{1, 2, 8, 8}}}), [](const auto& v) {
    const ComplexMap c = rfft2(v[0]);
    return add(probe(c.real, 7), probe(c.imag, 8));
  });
  multi("irfft2", shapes_of({{{1, 1, 4, 3}, {1, 1, 4, 3}}, {{2, 2, 3, 3}, {2, 2, 3, 3}}, {{1, 2, 8, 5}, {1, 2, 8, 5}}}),
        [](const auto& v) {
          const int64_t h = v[0].dim(2), w = (v[0].dim(3) - 1) * 2 + (h == 3 ? 1 : 0);
          return irfft2({v[0], v[1]}, h, w);
        });
  multi("complex_pointwise_filter",
        shapes_of({{{1, 1, 4, 3}, {1, 1, 4, 3}, {1, 4, 3}, {1, 4, 3}},
                   {{2, 2, 3, 2}, {2, 2, 3, 2}, {2, 2, 3, 2}, {2, 2, 3, 2}},
                   {{1, 3, 2, 2}, {1, 3, 2, 2}, {3, 2, 2}, {3, 2, 2}}}),
        [](const auto& v) {
          const ComplexMap c = complex_pointwise_filter({v[0], v[1]}, {v[2], v[3]});
          return add(probe(c.real, 9), probe(c.imag, 10));
        });
  multi("frequency_stage", shapes_of({{{1, 2, 8, 8}, {2, 4, 3}, {2, 4, 3}}, {{2, 1, 6, 4}, {1, 4, 3}, {1, 4, 3}}, {{1, 3, 4, 4}, {3, 4, 3}, {3, 4, 3}}}),
        [](const auto& v) { return frequency_stage(v[0], {v[1], v[2]}, 4); });
  r.check("gabor_kernel_lambda", [&] {
    double worst = 0.0;
    for (double lam : {0.9, 2.0, 5.5}) {
      for (double theta : {0.0, kPi / 4}) {
        Tensor l({1}, {lam});
        GaborSpec spec;
        spec.theta = theta;
        worst = std::max(worst, gcheck([&] { return probe(gabor_kernel(l, spec), 12); }, l, tol).max_rel_error);
      }
    }
    return std::pair{worst <= tol, "worst rel " + sci(worst)};
  });
  r.check("depthwise_shared", [&] {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
      Rng rng(++seed);
      Tensor x = randn({1 + i % 2, 2 + i, 5, 4 + i}, rng), k = randn({3, 3}, rng);
      for (const Tensor* t : {&x, &k})
        worst = std::max(worst, gcheck([&] { return probe(depthwise_shared(x, k), 13); }, *t, tol).max_rel_error);
    }
    return std::pair{worst <= tol, "worst rel " + sci(worst)};
  });

  // Composite modules. Parameters are perturbed so zero-initialized biases
  // and identity filters do not hide terms.
  const auto perturb = [](ParamStore& params, Rng& rng, double s) {
    for (const auto& [name, t] : params) {
      Tensor h = t;
      for (double& v : h.data()) v += s * rng.normal();
    }
  };
  r.check("transformer_block_1x8x16x16", [&] {
    ParamStore params;
    Rng rng(21);
    BlockConfig cfg{FdfaConfig{}, FdagnConfig{}};
    TransformerBlock block(params, "blk", cfg, rng);
    perturb(params, rng, 0.1);
    Tensor x = randn({1, 8, 16, 16}, rng);
    const auto f = [&] { return probe(block.forward(x), 22); };
    auto worst = gcheck(f, x, tol, kNetworkFloor, 256);
    for (const auto& [name, t] : params) {
      const auto rep = gcheck(f, t, tol, kNetworkFloor, 8);
      if (rep.max_rel_error > worst.max_rel_error) worst = rep;
    }
    return grad_ok(worst, tol);
  });
  r.check("dabformer_1x3x16x16_c4", [&] {
    ModelConfig cfg = ModelConfig::desk();
    cfg.base_channels = 4;
    Dabformer model(cfg, 23);
    Rng rng(24);
    perturb(model.params(), rng, 0.1);
    Tensor x = uniform({1, 3, 16, 16}, rng, 0.0, 1.0);
    const auto f = [&] { return probe(model.forward(x), 25); };
    auto worst = gcheck(f, x, tol, kNetworkFloor, 96);
    for (const auto& [name, t] : model.params()) {
      const auto rep = gcheck(f, t, tol, kNetworkFloor, 2);
      if (rep.max_rel_error > worst.max_rel_error) worst = rep;
    }
    return grad_ok(worst, tol);
  });
  r.check("total_loss_1x3x16x16", [&] {
    Rng rng(26);
    Tensor o = uniform({1, 3, 16, 16}, rng, 0.0, 1.0);
    const Tensor gt = uniform({1, 3, 16, 16}, rng, 0.0, 1.0);
    const ConvPyramidExtractor ext;
    return grad_ok(gcheck([&] { return total_loss(o, gt, LossWeights{}, ext).total; }, o, tol), tol);
  });
  return r.take();
}

std::vector<CheckResult> spectral() {
  Recorder r("spectral");
  Rng rng(31);
  r.check("haar_2x2_closed_form", [&] {
    const Subbands s = dwt2(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    const auto o = oracle::haar_block(1, 2, 3, 4);
    // the analysis formulas give hl = -1, lh = -2 for this block
    const double err = std::max({std::abs(s.ll.item() - 5), std::abs(s.hl.item() + 1), std::abs(s.lh.item() + 2),
                                 std::abs(s.hh.item()), std::abs(o[0] - 5), std::abs(o[1] + 1), std::abs(o[2] + 2)});
    return std::pair{err == 0.0, "ll,hl,lh,hh = " + std::to_string(s.ll.item()) + "," + std::to_string(s.hl.item()) +
                                     "," + std::to_string(s.lh.item()) + "," + std::to_string(s.hh.item())};
  });
  r.bound("haar_vs_block_oracle", 1e-15, [&] {
    const Tensor x = randn({2, 3, 6, 8}, rng);
    const Subbands s = dwt2(x);
    double m = 0.0;
    for (int64_t p = 0; p < 6; ++p)
      for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 4; ++j) {
          const int64_t b = p / 3, c = p % 3;
          const auto o = oracle::haar_block(x.at({b, c, 2 * i, 2 * j}), x.at({b, c, 2 * i, 2 * j + 1}),
                                            x.at({b, c, 2 * i + 1, 2 * j}), x.at({b, c, 2 * i + 1, 2 * j + 1}));
          const double got[4] = {s.ll.at({b, c, i, j}), s.hl.at({b, c, i, j}), s.lh.at({b, c, i, j}), s.hh.at({b, c, i, j})};
          for (int k = 0; k < 4; ++k) m = std::max(m, std::abs(got[k] - o[k]));
        }
    return m;
  });
  r.check("haar_inverse_closed_form", [&] {
    const Tensor one = Tensor::zeros({1, 1, 1, 1});
    const Tensor y = idwt2({Tensor::full({1, 1, 1, 1}, 2.0), one, one, one});
    const double err = max_abs_diff(y, Tensor::ones({1, 1, 2, 2}));
    return std::pair{err == 0.0, "max err " + sci(err)};
  });
  r.bound("haar_roundtrip", 1e-12, [&] {
    double m = 0.0;
    for (Shape s : {Shape{2, 3, 16, 16}, Shape{1, 1, 64, 2}, Shape{1, 2, 10, 34}}) {
      const Tensor x = randn(s, rng);
      m = std::max(m, max_abs_diff(idwt2(dwt2(x)), x));
    }
    return m;
  });
  r.bound("haar_energy_identity", 1e-12, [&] {
    const Tensor x = randn({1, 1, 8, 8}, rng);
    const Subbands s = dwt2(x);
    const auto e = [](const Tensor& t) {
      double a = 0;
      for (double v : t.data()) a += v * v;
      return a;
    };
    const double ex = e(x), es = e(s.ll) + e(s.hl) + e(s.lh) + e(s.hh);
    return std::abs(ex - es) / ex;
  });
  r.bound("rfft2_vs_brute_dft", 1e-10, [&] {
    double m = 0.0;
    for (auto [h, w] : {std::pair<int64_t, int64_t>{8, 8}, {4, 6}, {3, 5}, {1, 8}, {8, 2}}) {
      const Tensor x = randn({1, 1, h, w}, rng);
      const ComplexMap f = rfft2(x);
      const auto ref = oracle::dft2(x.data().data(), h, w);
      const int64_t wh = w / 2 + 1;
      for (int64_t u = 0; u < h; ++u)
        for (int64_t v = 0; v < wh; ++v) {
          m = std::max(m, std::abs(f.real.data()[u * wh + v] - ref[u * w + v].real()));
          m = std::max(m, std::abs(f.imag.data()[u * wh + v] - ref[u * w + v].imag()));
        }
    }
    return m;
  });
  r.bound("irfft2_roundtrip", 1e-10, [&] {
    double m = 0.0;
    for (auto [h, w] : {std::pair<int64_t, int64_t>{8, 8}, {5, 7}, {16, 4}}) {
      const Tensor x = randn({2, 2, h, w}, rng);
      m = std::max(m, max_abs_diff(irfft2(rfft2(x), h, w), x));
    }
    return m;
  });
  r.bound("filter_equals_circular_conv_4x4", 1e-10, [&] {
    const Tensor x = randn({1, 1, 4, 4}, rng), k = randn({1, 1, 4, 4}, rng);
    const ComplexMap K = rfft2(k);
    const Tensor y = irfft2(complex_pointwise_filter(rfft2(x), K), 4, 4);
    const std::vector<double> xv(x.data().begin(), x.data().end()), kv(k.data().begin(), k.data().end());
    const auto ref = oracle::circular_conv(xv, kv, 4, 4);
    return max_abs_diff(y.data(), ref);
  });
  return r.take();
}

std::vector<CheckResult> gabor() {
  Recorder r("gabor");
  r.check("point_value_lambda2_theta0", [&] {
    GaborSpec spec;  // lambda 2, theta 0, psi 0, sigma 2 pi, gamma 0.5
    const double got = gabor_kernel(spec).at({3, 4});
    // exp(-1/(8 pi^2)) cos(pi) = -0.98741537...
    const double expected = std::exp(-1.0 / (8.0 * kPi * kPi)) * std::cos(kPi);
    const double err = std::abs(got - expected);
    std::ostringstream os;
    os << std::setprecision(9) << "G(1,0) = " << got << ", closed-form err " << sci(err) << " <= 1e-12";
    return std::pair{err <= 1e-12, os.str()};
  });
  r.bound("center_is_one", 0.0, [&] { return std::abs(gabor_kernel(GaborSpec{}).at({3, 3}) - 1.0); });
  r.bound("random_specs_vs_scalar_evaluator", 1e-12, [&] {
    Rng rng(41);
    double m = 0.0;
    for (int i = 0; i < 20; ++i) {
      GaborSpec s;
      s.lambda = rng.uniform(kLambdaMin, kLambdaMax);
      s.theta = rng.uniform(0, 2 * kPi);
      s.psi = rng.uniform(-kPi, kPi);
      s.sigma = rng.uniform(0.5, 8.0);
      s.gamma = rng.uniform(0.2, 1.5);
      s.ksize = 3 + 2 * static_cast<int>(rng.uniform_int(0, 4));
      const Tensor k = gabor_kernel(s);
      const int half = s.ksize / 2;
      for (int y = -half; y <= half; ++y)
        for (int x = -half; x <= half; ++x)
          m = std::max(m, std::abs(k.at({y + half, x + half}) - oracle::gabor_value(x, y, s.lambda, s.theta, s.psi, s.sigma, s.gamma)));
    }
    return m;
  });
  r.bound("theta90_regenerated_vs_scalar", 1e-12, [&] {
    GaborSpec s0, s90;
    s90.theta = kPi / 2;
    const Tensor k0 = gabor_kernel(s0), k90 = gabor_kernel(s90);
    double m = 0.0;
    for (int y = -3; y <= 3; ++y)
      for (int x = -3; x <= 3; ++x) {
        m = std::max(m, std::abs(k0.at({y + 3, x + 3}) - oracle::gabor_value(x, y, 2.0, 0.0, 0.0, 2 * kPi, 0.5)));
        m = std::max(m, std::abs(k90.at({y + 3, x + 3}) - oracle::gabor_value(x, y, 2.0, kPi / 2, 0.0, 2 * kPi, 0.5)));
        // rotating the frame by 90 degrees maps (x, y) to (y, -x)
        m = std::max(m, std::abs(k90.at({y + 3, x + 3}) - k0.at({-x + 3, y + 3})));
      }
    return m;
  });
  r.check("subband_orientations", [&] {
    const bool ok = subband_orientation(Subband::kHL) == 0.0 && subband_orientation(Subband::kLH) == kPi / 2 &&
                    subband_orientation(Subband::kHH) == kPi / 4;
    return std::pair{ok, "HL 0, LH 90, HH 45 degrees"};
  });
  return r.take();
}

void perturb_store(ParamStore& params, Rng& rng, double s) {
  for (const auto& [name, t] : params) {
    Tensor h = t;
    for (double& v : h.data()) v += s * rng.normal();
  }
}

oracle::FdfaWeights fdfa_weights(const ParamStore& p, const std::string& pre, const Fdfa& fdfa) {
  oracle::FdfaWeights w;
  w.q_w = p.get(pre + ".q.weight");
  w.q_b = p.get(pre + ".q.bias");
  w.kv_w = p.get(pre + ".kv.weight");
  w.kv_b = p.get(pre + ".kv.bias");
  w.kvdw_w = p.get(pre + ".kv_dw.weight");
  w.kvdw_b = p.get(pre + ".kv_dw.bias");
  w.proj_w = p.get(pre + ".proj.weight");
  w.proj_b = p.get(pre + ".proj.bias");
  w.ll_dw_w = p.get(pre + ".ll.dw.weight");
  w.ll_dw_b = p.get(pre + ".ll.dw.bias");
  w.ll_pw_w = p.get(pre + ".ll.pw.weight");
  w.ll_pw_b = p.get(pre + ".ll.pw.bias");
  const Subband bands[3] = {Subband::kHL, Subband::kLH, Subband::kHH};
  for (int i = 0; i < 3; ++i) {
    w.lambda[i] = std::clamp(p.get(pre + ".lambda_" + to_string(bands[i])).item(), kLambdaMin, kLambdaMax);
    w.theta[i] = subband_orientation(bands[i]);
  }
  w.gabor_ksize = fdfa.config().gabor_ksize;
  w.temperature = p.get(pre + ".temperature").item();
  return w;
}

std::vector<CheckResult> fdfa() {
  Recorder r("fdfa");
  r.bound("scalar_reference_c4_h1_2x2", 1e-10, [&] {
    double m = 0.0;
    for (int64_t side : {2, 6}) {
      ParamStore p;
      Rng rng(51 + side);
      FdfaConfig cfg;
      cfg.channels = 4;
      Fdfa f(p, "a", cfg, rng);
      perturb_store(p, rng, 0.3);
      const Tensor x = randn({1, 4, side, side}, rng);
      m = std::max(m, max_abs_diff(f.forward(x), oracle::fdfa_forward(x, fdfa_weights(p, "a", f))));
    }
    return m;
  });
  r.bound("fdf_matches_manual_composition", 1e-12, [&] {
    ParamStore p;
    Rng rng(53);
    FdfaConfig cfg;
    cfg.channels = 4;
    Fdfa f(p, "a", cfg, rng);
    perturb_store(p, rng, 0.3);
    const Tensor x = randn({1, 4, 8, 8}, rng);
    const Subbands s = dwt2(x);
    const Conv2d dw{p.get("a.ll.dw.weight"), p.get("a.ll.dw.bias"), {1, 1, 4}};
    const Conv2d pw{p.get("a.ll.pw.weight"), p.get("a.ll.pw.bias"), {1, 0, 1}};
    const auto band = [&](const Tensor& t, Subband b) {
      GaborSpec spec;
      spec.theta = subband_orientation(b);
      return depthwise_shared(t, gabor_kernel(adaptive_lambda(p.get("a.lambda_" + to_string(b))), spec));
    };
    const Tensor manual = idwt2({pw(dw(s.ll)), band(s.hl, Subband::kHL), band(s.lh, Subband::kLH), band(s.hh, Subband::kHH)});
    return max_abs_diff(f.query_features(x), manual);
  });
  r.bound("attention_rows_sum_to_one", 1e-12, [&] {
    ParamStore p;
    Rng rng(54);
    FdfaConfig cfg;
    cfg.channels = 16;
    cfg.heads = 4;
    Fdfa f(p, "a", cfg, rng);
    const Tensor a = f.trace(randn({2, 16, 8, 8}, rng)).attention;
    const int64_t d = a.dim(-1);
    double m = 0.0;
    for (int64_t row = 0; row < a.numel() / d; ++row) {
      double s = 0.0;
      for (int64_t j = 0; j < d; ++j) s += a.data()[row * d + j];
      m = std::max(m, std::abs(s - 1.0));
    }
    return m;
  });
  r.check("attention_flops_closed_form", [&] {
    const int64_t v = attention_flops(8, 64, 1);
    return std::pair{v == 8192, std::to_string(v) + " == 8192"};
  });
  return r.take();
}

std::vector<CheckResult> fdagn() {
  Recorder r("fdagn");
  r.bound("dc_bin_removed_patch_means", 1e-10, [&] {
    Rng rng(61);
    const int64_t ch = 3, P = 8;
    FreqFilter filt{Tensor::ones({ch, P, P / 2 + 1}), Tensor::zeros({ch, P, P / 2 + 1})};
    for (int64_t c = 0; c < ch; ++c) filt.real.at({c, 0, 0}) = 0.0;
    const Tensor x = randn({2, ch, 16, 24}, rng);
    const Tensor y = frequency_stage(x, filt, P);
    double m = 0.0;
    const Tensor patches = patchify(y, P);
    for (int64_t i = 0; i < patches.numel() / (P * P); ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < P * P; ++j) s += patches.data()[i * P * P + j];
      m = std::max(m, std::abs(s / (P * P)));
    }
    // and the remainder equals x minus its per-patch mean
    const Tensor xp = patchify(x, P);
    for (int64_t i = 0; i < xp.numel() / (P * P); ++i) {
      double mu = 0.0;
      for (int64_t j = 0; j < P * P; ++j) mu += xp.data()[i * P * P + j];
      mu /= P * P;
      for (int64_t j = 0; j < P * P; ++j)
        m = std::max(m, std::abs(patches.data()[i * P * P + j] - (xp.data()[i * P * P + j] - mu)));
    }
    return m;
  });
  r.bound("identity_filter_is_noop", 1e-10, [&] {
    ParamStore p;
    Rng rng(62);
    Fdagn f(p, "f", FdagnConfig{}, rng);
    const auto t = f.trace(randn({1, 8, 16, 16}, rng));
    return max_abs_diff(t.frequency, t.expanded);
  });
  r.bound("block_terms_compose", 1e-12, [&] {
    ParamStore p;
    Rng rng(63);
    TransformerBlock block(p, "b", BlockConfig{}, rng);
    perturb_store(p, rng, 0.05);
    const Tensor x = randn({1, 8, 16, 16}, rng);
    const auto ln = [&](const Tensor& t, const char* n) {
      return layer_norm(t, p.get(std::string("b.") + n + ".gamma"), p.get(std::string("b.") + n + ".beta"), 1e-6);
    };
    const Tensor a = block.attention().branch(ln(x, "norm1"));
    const Tensor f = block.ffn().forward(ln(add(x, a), "norm2"));
    return max_abs_diff(sub(block.forward(x), x), add(a, f));
  });
  r.check("zeroed_branches_block_identity", [&] {
    ParamStore p;
    Rng rng(64);
    TransformerBlock block(p, "b", BlockConfig{}, rng);
    perturb_store(p, rng, 0.05);
    block.zero_residual_branches();
    const Tensor x = randn({2, 8, 16, 16}, rng);
    const bool ok = bitwise_equal(block.forward(x), x);
    return std::pair{ok, ok ? "bitwise identity" : "block altered its input"};
  });
  return r.take();
}

std::vector<CheckResult> model() {
  Recorder r("model");
  r.check("param_count_conv_3_to_8", [&] {
    ParamStore p;
    Rng rng(71);
    make_conv(p, "c", 3, 8, 3, rng);
    const int64_t n = param_count(p);
    return std::pair{n == 224, std::to_string(n) + " == 224"};
  });
  r.check("checkpoint_roundtrip_bitwise_forward", [&] {
    const fs::path dir = scratch_dir();
    ModelConfig cfg = ModelConfig::desk();
    cfg.base_channels = 4;
    cfg.blocks = {1, 1, 1, 1};
    Dabformer a(cfg, 72);
    Rng rng(73);
    perturb_store(a.params(), rng, 0.05);
    save_checkpoint(a, dir / "m.ckpt");
    Dabformer b(cfg, 999);
    load_checkpoint(b, dir / "m.ckpt");
    const Tensor x = uniform({1, 3, 20, 17}, rng, 0, 1);
    autograd::NoGradGuard g;
    const bool ok = bitwise_equal(a.forward(x), b.forward(x));
    fs::remove_all(dir);
    return std::pair{ok, ok ? "max diff 0" : "outputs differ"};
  });
  r.check("zeroed_output_conv_model_identity", [&] {
    Dabformer m(ModelConfig::desk(), 74);
    m.zero_output_conv();
    Rng rng(75);
    const Tensor x = uniform({1, 3, 20, 17}, rng, 0, 1);
    autograd::NoGradGuard g;
    const bool ok = bitwise_equal(m.forward(x), x);
    return std::pair{ok, ok ? "bitwise identity" : "model altered its input"};
  });
  r.check("output_shape_equals_input_shape", [&] {
    Dabformer m(ModelConfig::desk(), 76);
    Rng rng(77);
    autograd::NoGradGuard g;
    std::string sizes;
    bool ok = true;
    for (auto [h, w] : {std::pair<int64_t, int64_t>{17, 17}, {32, 32}, {48, 48}, {70, 45}}) {
      const Tensor x = uniform({1, 3, h, w}, rng, 0, 1);
      ok = ok && m.forward(x).shape() == x.shape();
      sizes += std::to_string(h) + "x" + std::to_string(w) + " ";
    }
    return std::pair{ok, sizes + (ok ? "preserved" : "changed")};
  });
  r.check("encoder_level_extents_and_widths", [&] {
    const ModelConfig cfg = ModelConfig::desk();
    Dabformer m(cfg, 78);
    Rng rng(79);
    autograd::NoGradGuard g;
    Dabformer::LevelTrace t;
    m.forward(uniform({1, 3, 40, 36}, rng, 0, 1), &t);
    bool ok = true;
    for (int l = 0; l < kLevels; ++l) {
      ok = ok && t.encoder[l].dim(1) == cfg.level_channels(l) && t.encoder[l].dim(2) == t.padded.dim(2) >> l &&
           t.encoder[l].dim(3) == t.padded.dim(3) >> l;
    }
    return std::pair{ok, ok ? "C0*2^l channels, padded/2^l extent" : "level shape mismatch"};
  });
  return r.take();
}

std::vector<CheckResult> losses() {
  Recorder r("losses");
  Rng rng(81);
  r.bound("l1_vs_loop", 1e-14, [&] {
    const Tensor a = uniform({2, 3, 9, 7}, rng, 0, 1), b = uniform({2, 3, 9, 7}, rng, 0, 1);
    return std::abs(l1_loss(a, b).item() - oracle::l1(a, b));
  });
  r.bound("perceptual_two_stage_vs_scalar", 1e-12, [&] {
    const ConvPyramidExtractor ext(0x5eed, {8, 16});
    const Tensor o = uniform({1, 3, 16, 16}, rng, 0, 1), gt = uniform({1, 3, 16, 16}, rng, 0, 1);
    std::vector<Tensor> w, b;
    for (const Conv2d& c : ext.stages()) {
      w.push_back(c.weight);
      b.push_back(c.bias);
    }
    return std::abs(perceptual_loss(o, gt, ext).item() - oracle::perceptual(o, gt, w, b));
  });
  r.bound("edge_step_vs_sobel_loop", 1e-12, [&] {
    Tensor o = Tensor::zeros({1, 1, 8, 8});
    for (int64_t y = 0; y < 8; ++y)
      for (int64_t x = 4; x < 8; ++x) o.at({0, 0, y, x}) = 1.0;
    const Tensor gt = Tensor::zeros({1, 1, 8, 8});
    const Tensor so = oracle::sobel_magnitude(o, kSobelEps), sg = oracle::sobel_magnitude(gt, kSobelEps);
    return std::abs(edge_loss(o, gt).item() - oracle::l1(so, sg));
  });
  r.bound("sobel_random_vs_loop", 1e-12, [&] {
    const Tensor x = uniform({2, 3, 7, 9}, rng, 0, 1);
    return max_abs_diff(sobel_magnitude(x), oracle::sobel_magnitude(x, kSobelEps));
  });
  r.bound("ssim_random_vs_loop", 1e-12, [&] {
    const Tensor a = uniform({1, 2, 16, 14}, rng, 0, 1), b = uniform({1, 2, 16, 14}, rng, 0, 1);
    return std::abs(ssim(a, b).item() - oracle::ssim(a, b));
  });
  r.bound("ssim_self_is_one", 1e-12, [&] {
    const Tensor a = uniform({1, 3, 16, 16}, rng, 0, 1);
    return std::abs(ssim(a, a).item() - 1.0);
  });
  r.bound("ssim_zero_vs_one_closed_form", 1e-12, [&] {
    const double v = ssim(Tensor::zeros({1, 1, 16, 16}), Tensor::ones({1, 1, 16, 16})).item();
    return std::abs(v - kSsimC1 / (1.0 + kSsimC1));
  });
  r.bound("psnr_uniform_half", 1e-4, [&] {
    const double v = psnr(Tensor::full({1, 3, 8, 8}, 0.5), Tensor::zeros({1, 3, 8, 8}));
    return std::max(std::abs(v - 10.0 * std::log10(4.0)), std::abs(v - 6.0206));
  });
  r.bound("weighted_sum_linearity", 1e-12, [&] {
    const Tensor o = uniform({1, 3, 16, 16}, rng, 0, 1), gt = uniform({1, 3, 16, 16}, rng, 0, 1);
    const ConvPyramidExtractor ext;
    const LossWeights w;
    if (w.l1 != 10.0 || w.perceptual != 0.6 || w.edge != 0.4 || w.ssim != 0.5) return 1.0;
    const LossTerms t = total_loss(o, gt, w, ext);
    // each unit weight isolates one term
    double m = 0.0;
    const double terms[4] = {t.l1.item(), t.perceptual.item(), t.edge.item(), t.ssim.item()};
    for (int i = 0; i < 4; ++i) {
      LossWeights e{0, 0, 0, 0};
      (i == 0 ? e.l1 : i == 1 ? e.perceptual : i == 2 ? e.edge : e.ssim) = 1.0;
      m = std::max(m, std::abs(total_loss(o, gt, e, ext).total.item() - terms[i]));
    }
    const double expected = 10 * terms[0] + 0.6 * terms[1] + 0.4 * terms[2] + 0.5 * terms[3];
    return std::max(m, std::abs(t.total.item() - expected));
  });
  r.bound("l1_tenth_times_ten", 1e-12, [&] {
    const Tensor gt = uniform({1, 3, 16, 16}, rng, 0.1, 0.9);
    const Tensor o = add_scalar(gt, 0.1);
    return std::abs(total_loss(o, gt, LossWeights{10, 0, 0, 0}, IdentityExtractor{}).total.item() - 1.0);
  });
  return r.take();
}

std::vector<CheckResult> harness() {
  Recorder r("harness");
  r.check("coverage_band_100_seeds", [&] {
    double lo = 1.0, hi = 0.0;
    const Tensor clean = synth_image(Generator::kGradients, 64, 1, 0);
    for (uint64_t s = 0; s < 100; ++s) {
      CorruptionSpec spec;
      spec.seed = s;
      const double f = mask_fraction(corrupt(clean, spec).mask);
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
    return std::pair{lo >= 0.4 && hi <= 0.5, "fractions in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"};
  });
  r.check("texture_hh_energy_exceeds_smooth", [&] {
    const auto hh = [](Generator g) {
      const Tensor img = synth_image(g, 64, 3, 0);
      const Subbands s = dwt2(reshape(img, {1, 3, 64, 64}));
      double e = 0.0;
      for (double v : s.hh.data()) e += v * v;
      return e;
    };
    const double noise = hh(Generator::kFilteredNoise), grad = hh(Generator::kGradients);
    return std::pair{noise > grad, sci(noise) + " > " + sci(grad)};
  });
  r.bound("ppm_parses_under_reference_grammar", 0.5 / 255.0 + 1e-15, [&] {
    const fs::path dir = scratch_dir();
    Rng rng(91);
    const Tensor img = uniform({3, 13, 21}, rng, 0, 1);
    write_image(dir / "x.ppm", img);
    const Tensor back = oracle::parse_ppm(dir / "x.ppm");
    fs::remove_all(dir);
    return max_abs_diff(back, img);
  });
  r.bound("png_roundtrip_quantization", 0.5 / 255.0 + 1e-15, [&] {
    const fs::path dir = scratch_dir();
    Rng rng(92);
    const Tensor img = uniform({3, 9, 14}, rng, 0, 1);
    write_image(dir / "x.png", img);
    const Tensor back = read_image(dir / "x.png");
    fs::remove_all(dir);
    return max_abs_diff(back, img);
  });
  return r.take();
}

std::vector<CheckResult> cli() {
  Recorder r("cli");
  r.bound("cosine_lr_endpoints_and_midpoint", 1e-18, [&] {
    const int64_t n = 20001;  // odd, so iteration 10000 sits exactly at the midpoint
    double m = std::abs(cosine_lr(0, n, 2e-4, 1e-6) - 2e-4);
    m = std::max(m, std::abs(cosine_lr(n - 1, n, 2e-4, 1e-6) - 1e-6));
    m = std::max(m, std::abs(cosine_lr((n - 1) / 2, n, 2e-4, 1e-6) - 1.005e-4));
    for (int64_t i : {1, 777, 15000}) m = std::max(m, std::abs(cosine_lr(i, n, 2e-4, 1e-6) - oracle::cosine_lr(i, n, 2e-4, 1e-6)));
    return m;
  });
  r.check("masked_psnr_not_above_full_for_identity", [&] {
    ModelConfig cfg = ModelConfig::desk();
    cfg.blocks = {1, 1, 1, 1};
    Dabformer model(cfg, 1);
    model.zero_output_conv();
    CorruptionSpec spec;
    spec.seed = 5;
    const auto pairs = make_pairs(synth_corpus(3, 32, Generator::kMixed, 7), spec);
    const EvalMetrics m = evaluate(model, pairs);
    return std::pair{m.psnr_masked <= m.psnr,
                     "masked " + std::to_string(m.psnr_masked) + " <= full " + std::to_string(m.psnr)};
  });
  return r.take();
}

const std::map<std::string, std::vector<CheckResult> (*)()>& registry() {
  static const std::map<std::string, std::vector<CheckResult> (*)()> suites{
      {"tensor-core", tensor_core}, {"gradients", gradients}, {"spectral", spectral}, {"gabor", gabor},
      {"fdfa", fdfa},               {"fdagn", fdagn},         {"model", model},       {"losses", losses},
      {"harness", harness},         {"cli", cli},
  };
  return suites;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"tensor-core", "gradients", "spectral", "gabor", "fdfa", "fdagn", "model", "losses", "harness", "cli"};
}

std::vector<CheckResult> run_suite(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw Error("verify: unknown suite '" + name + "'");
  return it->second();
}

std::vector<CheckResult> run_all() {
  std::vector<CheckResult> all;
  for (const auto& n : suite_names()) {
    auto part = run_suite(n);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

void print_results(const std::vector<CheckResult>& results, std::ostream& os) {
  for (const auto& c : results)
    os << (c.passed ? "PASS " : "FAIL ") << c.suite << '/' << c.name << "  " << c.detail << '\n';
  os << "\nsuite          pass  fail\n";
  for (const auto& n : suite_names()) {
    int pass = 0, fail = 0;
    for (const auto& c : results)
      if (c.suite == n) (c.passed ? pass : fail)++;
    if (pass + fail == 0) continue;
    os << std::left << std::setw(14) << n << std::right << std::setw(5) << pass << std::setw(6) << fail << '\n';
  }
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& c) { return c.passed; });
}

}  // namespace dabformer::verify
