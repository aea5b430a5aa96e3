#include "dabformer/fdagn.hpp"
#include "dabformer/grad_check.hpp"
#include "dabformer/param_store.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;

namespace {
void perturb(ParamStore& p, Rng& rng, double s) {
  for (const auto& [name, t] : p) {
    Tensor h = t;
    for (double& v : h.data()) v += s * rng.normal();
  }
}
}  // namespace

TEST_CASE("hidden width is the nearest even integer to C r") {
  CHECK(hidden_channels(8, 2.66) == 22);
  CHECK(hidden_channels(48, 2.66) == 128);
  CHECK(hidden_channels(4, 2.0) == 8);
}

TEST_CASE("identity filter: frequency stage is a no-op") {
  ParamStore p;
  Rng rng(1);
  Fdagn f(p, "f", FdagnConfig{}, rng);
  const auto t = f.trace(randn({2, 8, 16, 24}, rng));
  CHECK(max_abs_diff(t.frequency, t.expanded) <= 1e-10);

  FdagnConfig bypass;
  bypass.bypass_frequency = true;
  ParamStore q;
  Rng rng2(1);
  Fdagn g(q, "f", bypass, rng2);
  const Tensor x = randn({1, 8, 16, 16}, rng);
  CHECK(max_abs_diff(f.forward(x), g.forward(x)) <= 1e-10);
}

TEST_CASE("zero filter annihilates, DC removal subtracts patch means") {
  Rng rng(2);
  const Tensor x = randn({2, 3, 16, 8}, rng);
  const Shape fs{3, 8, 5};
  const Tensor zero = frequency_stage(x, {Tensor::zeros(fs), Tensor::zeros(fs)}, 8);
  for (double v : zero.data()) CHECK(v == 0.0);

  FreqFilter dc{Tensor::ones(fs), Tensor::zeros(fs)};
  for (int64_t c = 0; c < 3; ++c) dc.real.at({c, 0, 0}) = 0.0;
  const Tensor y = patchify(frequency_stage(x, dc, 8), 8), xp = patchify(x, 8);
  for (int64_t i = 0; i < y.numel() / 64; ++i) {
    double my = 0, mx = 0;
    for (int64_t j = 0; j < 64; ++j) {
      my += y.data()[i * 64 + j] / 64;
      mx += xp.data()[i * 64 + j] / 64;
    }
    CHECK(std::abs(my) <= 1e-10);
    for (int64_t j = 0; j < 64; ++j) CHECK(std::abs(y.data()[i * 64 + j] - (xp.data()[i * 64 + j] - mx)) <= 1e-10);
  }
}

TEST_CASE("non-multiple extents are padded for the frequency stage, or rejected") {
  Rng rng(3);
  const Tensor x = randn({1, 2, 10, 12}, rng);
  const Shape fs{2, 8, 5};
  CHECK(max_abs_diff(frequency_stage(x, {Tensor::ones(fs), Tensor::zeros(fs)}, 8), x) <= 1e-12);
  CHECK_THROWS_AS(frequency_stage(x, {Tensor::ones(fs), Tensor::zeros(fs)}, 8, false), ShapeError);
  FdagnConfig bad;
  bad.patch = 6;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("gating pipeline shapes and gradients") {
  ParamStore p;
  Rng rng(4);
  Fdagn f(p, "f", FdagnConfig{}, rng);
  CHECK(param_count(p) == fdagn_param_count(FdagnConfig{}));
  perturb(p, rng, 0.1);
  const Tensor x = randn({1, 8, 8, 8}, rng);
  const auto t = f.trace(x);
  CHECK(t.expanded.dim(1) == 22);
  CHECK(t.gated.dim(1) == 11);
  CHECK(t.output.shape() == x.shape());
  GradCheckOptions o;
  o.floor = 1e-5;
  const auto fn = [&] { return probe(f.forward(x), 5); };
  CHECK(grad_check(fn, x, o).max_rel_error <= 1e-4);
  CHECK(grad_check(fn, p.get("f.filter.real"), o).max_rel_error <= 1e-4);
  CHECK(grad_check(fn, p.get("f.filter.imag"), o).max_rel_error <= 1e-4);
}

TEST_CASE("plain feed-forward variant") {
  ParamStore p;
  Rng rng(5);
  FdagnConfig cfg;
  cfg.kind = parse_ffn("ffn");
  Fdagn f(p, "f", cfg, rng);
  CHECK(param_count(p) == fdagn_param_count(cfg));
  CHECK_FALSE(p.contains("f.filter.real"));
  CHECK(f.forward(randn({1, 8, 5, 7}, rng)).shape() == Shape{1, 8, 5, 7});
  CHECK(to_string(FfnKind::kFdagn) == "fdagn");
  CHECK_THROWS(parse_ffn("mlp"));
}

TEST_CASE("transformer block") {
  ParamStore p;
  Rng rng(6);
  TransformerBlock block(p, "b", BlockConfig{}, rng);
  perturb(p, rng, 0.05);
  const Tensor x = randn({1, 8, 16, 16}, rng);

  SUBCASE("block(x) - x equals the two standalone terms") {
    const auto ln = [&](const Tensor& t, const std::string& n) {
      return layer_norm(t, p.get("b." + n + ".gamma"), p.get("b." + n + ".beta"));
    };
    const Tensor a = block.attention().branch(ln(x, "norm1"));
    const Tensor f = block.ffn().forward(ln(add(x, a), "norm2"));
    CHECK(max_abs_diff(sub(block.forward(x), x), add(a, f)) <= 1e-12);
    const auto terms = block.terms(x);
    CHECK(max_abs_diff(terms.attention, a) == 0.0);
    CHECK(max_abs_diff(terms.ffn, f) == 0.0);
  }
  SUBCASE("finite differences through the block") {
    GradCheckOptions o;
    o.floor = 1e-4;
    o.max_elements = 128;
    CHECK(grad_check([&] { return probe(block.forward(x), 7); }, x, o).max_rel_error <= 1e-4);
  }
  SUBCASE("zeroed residual branches make the block an identity") {
    block.zero_residual_branches();
    CHECK(bitwise_equal(block.forward(x), x));
  }
}
