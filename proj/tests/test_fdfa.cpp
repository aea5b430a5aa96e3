#include "dabformer/fdfa.hpp"
#include "dabformer/grad_check.hpp"
#include "dabformer/oracles.hpp"
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

FdfaConfig config_c(int64_t c, int64_t heads = 1) {
  FdfaConfig cfg;
  cfg.channels = c;
  cfg.heads = heads;
  return cfg;
}

oracle::FdfaWeights weights_of(const ParamStore& p, const std::string& pre) {
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
  w.temperature = p.get(pre + ".temperature").item();
  return w;
}

}  // namespace

TEST_CASE("forward matches the scalar step-by-step reference") {
  for (int64_t side : {2, 4, 6}) {
    ParamStore p;
    Rng rng(10 + side);
    Fdfa f(p, "a", config_c(4), rng);
    perturb(p, rng, 0.3);
    const Tensor x = randn({1, 4, side, side}, rng);
    CHECK(max_abs_diff(f.forward(x), oracle::fdfa_forward(x, weights_of(p, "a"))) <= 1e-10);
  }
}

TEST_CASE("fused query equals the manual dwt / gabor / idwt composition") {
  ParamStore p;
  Rng rng(2);
  Fdfa f(p, "a", config_c(4), rng);
  perturb(p, rng, 0.3);
  const Tensor x = randn({1, 4, 8, 8}, rng);
  const Subbands s = dwt2(x);
  const Conv2d dw{p.get("a.ll.dw.weight"), p.get("a.ll.dw.bias"), {1, 1, 4}};
  const Conv2d pw{p.get("a.ll.pw.weight"), p.get("a.ll.pw.bias"), {1, 0, 1}};
  const auto band = [&](const Tensor& t, Subband b) {
    GaborSpec spec;
    spec.theta = subband_orientation(b);
    spec.lambda = std::clamp(p.get("a.lambda_" + to_string(b)).item(), kLambdaMin, kLambdaMax);
    return depthwise_shared(t, gabor_kernel(spec));
  };
  const Tensor manual = idwt2({pw(dw(s.ll)), band(s.hl, Subband::kHL), band(s.lh, Subband::kLH), band(s.hh, Subband::kHH)});
  CHECK(max_abs_diff(f.query_features(x), manual) <= 1e-12);
}

TEST_CASE("fdf with identity filters is the identity") {
  Rng rng(3);
  const Tensor x = randn({2, 3, 8, 6}, rng);
  const auto id = [](const Tensor& t) { return t; };
  CHECK(max_abs_diff(fdf_apply(x, id, id, id, id), x) <= 1e-10);
  Tensor delta = Tensor::zeros({3, 3});
  delta.at({1, 1}) = 1.0;
  const auto dk = [&](const Tensor& t) { return depthwise_shared(t, delta); };
  CHECK(max_abs_diff(fdf_apply(x, id, dk, dk, dk), x) <= 1e-10);
}

TEST_CASE("constant input has no detail: output depends only on the LL path") {
  ParamStore p;
  Rng rng(4);
  Fdfa f(p, "a", config_c(4), rng);
  perturb(p, rng, 0.3);
  const Tensor x = Tensor::full({1, 4, 8, 8}, 0.7);
  const Subbands s = dwt2(x);
  for (const Tensor* b : {&s.hl, &s.lh, &s.hh})
    for (double v : b->data()) CHECK(v == 0.0);
  const auto zero = [](const Tensor& t) { return scale(t, 0.0); };
  const DepthwiseSeparable ll{Conv2d{p.get("a.ll.dw.weight"), p.get("a.ll.dw.bias"), {1, 1, 4}},
                              Conv2d{p.get("a.ll.pw.weight"), p.get("a.ll.pw.bias"), {1, 0, 1}}};
  CHECK(max_abs_diff(f.query_features(x), fdf_apply(x, ll, zero, zero, zero)) <= 1e-12);
}

TEST_CASE("attention rows sum to one and the zeroed projection is a pure residual") {
  ParamStore p;
  Rng rng(5);
  Fdfa f(p, "a", config_c(16, 4), rng);
  const Tensor x = randn({2, 16, 8, 8}, rng);
  const auto t = f.trace(x);
  CHECK(t.attention.shape() == Shape{2, 4, 4, 4});
  for (int64_t r = 0; r < t.attention.numel() / 4; ++r) {
    double s = 0;
    for (int64_t j = 0; j < 4; ++j) s += t.attention.data()[r * 4 + j];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  Tensor w = f.output_projection().weight, b = f.output_projection().bias;
  for (double& v : w.data()) v = 0.0;
  for (double& v : b.data()) v = 0.0;
  CHECK(bitwise_equal(f.forward(x), x));
}

TEST_CASE("every query path keeps the shape and is differentiable") {
  for (const char* q : {"plain", "dwt", "gabor", "fused"}) {
    for (const char* dirs : {"matched", "fused", "conv", "random", "unified:30"}) {
      ParamStore p;
      Rng rng(6);
      FdfaConfig cfg = config_c(4, 2);
      cfg.query = parse_query_path(q);
      cfg.orientation = parse_orientation(dirs);
      Fdfa f(p, "a", cfg, rng);
      CHECK(param_count(p) == fdfa_param_count(cfg));
      perturb(p, rng, 0.2);
      const Tensor x = randn({1, 4, 6, 4}, rng);
      CHECK(f.forward(x).shape() == x.shape());
      GradCheckOptions o;
      o.floor = 1e-5;
      o.max_elements = 24;
      CHECK(grad_check([&] { return probe(f.forward(x), 7); }, x, o).max_rel_error <= 1e-4);
    }
  }
}

TEST_CASE("adaptive wavelengths receive gradients, fixed ones are not parameters") {
  ParamStore p;
  Rng rng(7);
  Fdfa f(p, "a", config_c(4), rng);
  CHECK(p.get("a.lambda_HL").item() == kLambdaInit);
  const Tensor x = randn({1, 4, 8, 8}, rng);
  GradCheckOptions o;
  o.floor = 1e-5;
  CHECK(grad_check([&] { return probe(f.forward(x), 8); }, p.get("a.lambda_LH"), o).max_rel_error <= 1e-4);

  ParamStore q;
  FdfaConfig fixed = config_c(4);
  fixed.lambda = parse_lambda("fixed:3.5");
  Fdfa g(q, "a", fixed, rng);
  CHECK_FALSE(q.contains("a.lambda_HL"));
  CHECK(g.band_lambda(Subband::kHH).item() == 3.5);
}

TEST_CASE("attention flop counts") {
  CHECK(attention_flops(8, 64, 1) == 8192);
  CHECK(attention_flops(8, 128, 1) == 2 * attention_flops(8, 64, 1));
  CHECK(attention_flops(16, 64, 1) == 4 * attention_flops(8, 64, 1));
  CHECK(attention_flops(8, 64, 8) == 2 * 8 * 64);
}

TEST_CASE("configuration errors") {
  ParamStore p;
  Rng rng(8);
  CHECK_THROWS(Fdfa(p, "a", config_c(6, 4), rng));
  CHECK_THROWS(parse_query_path("qkv"));
  CHECK_THROWS(parse_lambda("fixed:"));
  CHECK(to_string(parse_lambda("fixed:2.5")) == "fixed:2.5");
  Fdfa ok(p, "b", config_c(4), rng);
  CHECK_THROWS_AS(ok.forward(Tensor::zeros({1, 4, 5, 4})), Error);
  CHECK_THROWS_AS(ok.forward(Tensor::zeros({1, 3, 4, 4})), ShapeError);
}
