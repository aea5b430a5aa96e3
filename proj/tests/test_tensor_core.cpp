#include <cmath>

#include "dabformer/grad_check.hpp"
#include "dabformer/layers.hpp"
#include "dabformer/oracles.hpp"
#include "dabformer/param_store.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;

TEST_CASE("conv2d: all-ones 3x3 centre sums to 9") {
  const Tensor y = conv2d(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3}), {}, {1, 1, 1});
  CHECK(y.at({0, 0, 1, 1}) == 9.0);
  CHECK(y.at({0, 0, 0, 0}) == 4.0);
}

TEST_CASE("conv2d: identity kernel returns the input") {
  Rng rng(1);
  const Tensor x = randn({2, 3, 5, 4}, rng);
  Tensor w = Tensor::zeros({3, 1, 3, 3});
  for (int64_t c = 0; c < 3; ++c) w.at({c, 0, 1, 1}) = 1.0;
  CHECK(bitwise_equal(conv2d(x, w, {}, {1, 1, 3}), x));
}

TEST_CASE("conv2d: matches the direct loop oracle") {
  Rng rng(2);
  SUBCASE("1x2x5x5 with 3x2x3x3 weights") {
    const Tensor x = randn({1, 2, 5, 5}, rng), w = randn({3, 2, 3, 3}, rng), b = randn({3}, rng);
    CHECK(max_abs_diff(conv2d(x, w, b, {1, 1, 1}), oracle::conv2d(x, w, b, 1, 1, 1)) <= 1e-12);
  }
  SUBCASE("depthwise, stride 2") {
    const Tensor x = randn({2, 4, 9, 7}, rng), w = randn({4, 1, 3, 3}, rng);
    CHECK(max_abs_diff(conv2d(x, w, {}, {2, 1, 4}), oracle::conv2d(x, w, Tensor(), 2, 1, 4)) <= 1e-12);
  }
  SUBCASE("1x1 via BLAS") {
    const Tensor x = randn({2, 6, 4, 5}, rng), w = randn({5, 6, 1, 1}, rng), b = randn({5}, rng);
    CHECK(max_abs_diff(conv2d(x, w, b), oracle::conv2d(x, w, b, 1, 0, 1)) <= 1e-12);
  }
}

TEST_CASE("conv2d: shape errors name the dimension") {
  const Tensor x = Tensor::zeros({1, 3, 5, 5});
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({2, 2, 3, 3})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({2, 1, 3, 3}), {}, {1, 1, 2}), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({2, 3, 3, 3}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("layer_norm") {
  Rng rng(3);
  const Tensor g = Tensor::ones({4}), b = Tensor::zeros({4});
  SUBCASE("constant channels collapse to beta") {
    const Tensor beta({4}, {0.1, -0.2, 0.3, 0.4});
    const Tensor y = layer_norm(Tensor::full({1, 4, 2, 3}, 7.0), randn({4}, rng), beta);
    for (int64_t c = 0; c < 4; ++c) CHECK(y.at({0, c, 1, 2}) == doctest::Approx(beta.data()[c]).epsilon(1e-12));
  }
  SUBCASE("zero mean, unit variance per location") {
    const Tensor y = layer_norm(randn({2, 4, 3, 3}, rng, 3.0), g, b);
    for (int64_t p = 0; p < 9; ++p) {
      double mu = 0, var = 0;
      for (int64_t c = 0; c < 4; ++c) mu += y.data()[c * 9 + p] / 4;
      for (int64_t c = 0; c < 4; ++c) var += std::pow(y.data()[c * 9 + p] - mu, 2) / 4;
      CHECK(std::abs(mu) <= 1e-10);
      CHECK(std::abs(var - 1.0) <= 1e-6);  // eps = 1e-6 inside the root
    }
  }
  SUBCASE("finite differences on 1x4x2x2") {
    const Tensor x = randn({1, 4, 2, 2}, rng), gg = randn({4}, rng), bb = randn({4}, rng);
    GradCheckOptions o;
    o.tolerance = 1e-6;
    for (const Tensor* t : {&x, &gg, &bb}) {
      const auto rep = grad_check([&] { return probe(layer_norm(x, gg, bb), 4); }, *t, o);
      CHECK(rep.max_rel_error <= 1e-6);
    }
  }
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({1, 3, 2, 2}), g, b), ShapeError);
}

TEST_CASE("softmax") {
  const Tensor y = softmax(Tensor({2}, {0.0, std::log(3.0)}), 0);
  CHECK(std::abs(y.data()[0] - 0.25) <= 1e-15);
  CHECK(std::abs(y.data()[1] - 0.75) <= 1e-15);
  const Tensor eq = softmax(Tensor::full({5}, 2.5), 0);
  for (double v : eq.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  Rng rng(5);
  const Tensor x = randn({3, 7}, rng);
  CHECK(max_abs_diff(softmax(x, 1), softmax(add_scalar(x, 123.0), 1)) <= 1e-12);
  const Tensor s = softmax(randn({4, 6, 5}, rng, 10.0), -1);
  for (int64_t r = 0; r < 24; ++r) {
    double acc = 0;
    for (int64_t j = 0; j < 5; ++j) acc += s.data()[r * 5 + j];
    CHECK(std::abs(acc - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(softmax(x, 2), ShapeError);
}

TEST_CASE("gelu") {
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(std::abs(gelu(Tensor::scalar(10.0)).item() - 10.0) <= 1e-6);
  // frozen from the scalar x * Phi(x) reference
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(0.8413447460685429).epsilon(1e-15));
  const Tensor x({4}, {-2.0, -0.5, 0.3, 4.0});
  GradCheckOptions o;
  o.tolerance = 1e-6;
  CHECK(grad_check([&] { return probe(gelu(x), 6); }, x, o).max_rel_error <= 1e-6);
}

TEST_CASE("pixel shuffle") {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor u = pixel_unshuffle(x, 2);
  CHECK(u.shape() == Shape{1, 4, 1, 1});
  CHECK(u.data()[0] == 1);
  CHECK(u.data()[1] == 2);
  CHECK(u.data()[2] == 3);
  CHECK(u.data()[3] == 4);
  Rng rng(7);
  const Tensor r = randn({2, 3, 8, 8}, rng);
  const Tensor d = pixel_unshuffle(r, 2);
  CHECK(d.shape() == Shape{2, 12, 4, 4});
  CHECK(d.numel() == r.numel());
  CHECK(bitwise_equal(pixel_shuffle(d, 2), r));
  CHECK_THROWS(pixel_unshuffle(Tensor::zeros({1, 1, 3, 4}), 2));
}

TEST_CASE("grad_check basics") {
  Tensor x({3}, {1.0, 2.0, 3.0});
  x.set_requires_grad(true);
  autograd::backward(sum(square(x)));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK(x.grad()[2] == 6.0);
  x.zero_grad();
  GradCheckOptions o;
  o.tolerance = 1e-8;
  CHECK(grad_check([&] { return sum(square(x)); }, x, o).max_abs_error <= 1e-8);

  Rng rng(8);
  Tensor y = randn({2, 5}, rng);
  y.set_requires_grad(true);
  autograd::backward(sum(y));
  for (double g : y.grad()) CHECK(g == 1.0);

  const Tensor z({1}, {-1.0});
  CHECK_THROWS_AS(grad_check([&] { return sum(sqrt(z)); }, z), NonFiniteError);
}

TEST_CASE("elementwise, products and layout ops") {
  Rng rng(9);
  const Tensor a = randn({2, 3}, rng), b = randn({2, 3}, rng);
  CHECK(max_abs_diff(sub(add(a, b), b), a) <= 1e-15);
  CHECK(bitwise_equal(mul(a, Tensor::ones({2, 3})), a));
  CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), ShapeError);

  const Tensor m({2, 2}, {1, 2, 3, 4}), n({2, 2}, {5, 6, 7, 8});
  const Tensor p = matmul(m, n);
  CHECK(p.data()[0] == 19);
  CHECK(p.data()[1] == 22);
  CHECK(p.data()[2] == 43);
  CHECK(p.data()[3] == 50);
  CHECK(bitwise_equal(matmul_nt(m, n), matmul(m, transpose(n))));
  CHECK(bitwise_equal(transpose(transpose(a)), a));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);

  CHECK(reshape(a, {3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);

  const Tensor x = randn({1, 5, 2, 2}, rng);
  const std::vector<int64_t> sizes{2, 3};
  const auto parts = split_channels(x, sizes);
  CHECK(bitwise_equal(concat_channels(parts), x));
  CHECK(bitwise_equal(slice_channels(x, 2, 3), parts[1]));

  CHECK(sum(Tensor({3}, {1, 2, 3})).item() == 6);
  CHECK(mean(Tensor({4}, {1, 2, 3, 6})).item() == 3);
  CHECK(l2_norm(Tensor({2}, {3, 4})).item() == 5);
}

TEST_CASE("padding and cropping") {
  const Tensor x({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = pad_reflect(x, 1, 2);
  CHECK(r.shape() == Shape{1, 1, 3, 5});
  // reflection excludes the edge sample
  CHECK(r.at({0, 0, 0, 3}) == 2);
  CHECK(r.at({0, 0, 0, 4}) == 1);
  CHECK(r.at({0, 0, 2, 0}) == 1);
  const Tensor rep = pad_replicate(x, 1);
  CHECK(rep.shape() == Shape{1, 1, 4, 5});
  CHECK(rep.at({0, 0, 0, 0}) == 1);
  CHECK(rep.at({0, 0, 3, 4}) == 6);
  CHECK(bitwise_equal(crop(pad_zero(x, 3, 1), 2, 3), x));
}

TEST_CASE("param store counts") {
  ParamStore p;
  CHECK(param_count(p) == 0);
  Rng rng(10);
  make_conv(p, "c", 3, 8, 3, rng);
  CHECK(param_count(p) == 224);
  CHECK_THROWS(p.add("c.weight", Tensor::zeros({1})));
}

TEST_CASE("non-finite values are reported") {
  CHECK_THROWS_AS(div(Tensor::ones({2}), Tensor::zeros({2})), NonFiniteError);
}
