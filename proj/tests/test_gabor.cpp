#include <numbers>

#include "dabformer/gabor.hpp"
#include "dabformer/grad_check.hpp"
#include "dabformer/oracles.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;

constexpr double kPi = std::numbers::pi;

TEST_CASE("kernel centre and a frozen point value") {
  const Tensor k = gabor_kernel(GaborSpec{});
  CHECK(k.shape() == Shape{7, 7});
  CHECK(k.at({3, 3}) == 1.0);
  // (x, y) = (1, 0), lambda 2: exp(-1/(8 pi^2)) cos(pi)
  CHECK(std::abs(k.at({3, 4}) - (-0.9874147175062196)) <= 1e-12);
  CHECK(std::abs(k.at({3, 4}) - oracle::gabor_value(1, 0, 2.0, 0.0, 0.0, 2 * kPi, 0.5)) <= 1e-15);
}

TEST_CASE("random specs agree with the scalar evaluator") {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    GaborSpec s;
    s.lambda = rng.uniform(kLambdaMin, kLambdaMax);
    s.theta = rng.uniform(0, 2 * kPi);
    s.psi = rng.uniform(-kPi, kPi);
    s.sigma = rng.uniform(0.5, 8);
    s.gamma = rng.uniform(0.2, 1.5);
    s.ksize = 3 + 2 * static_cast<int>(rng.uniform_int(0, 4));
    const Tensor k = gabor_kernel(s);
    const int h = s.ksize / 2;
    for (int y = -h; y <= h; ++y)
      for (int x = -h; x <= h; ++x)
        CHECK(std::abs(k.at({y + h, x + h}) - oracle::gabor_value(x, y, s.lambda, s.theta, s.psi, s.sigma, s.gamma)) <=
              1e-12);
  }
}

TEST_CASE("theta = 90 degrees regenerates the rotated kernel") {
  GaborSpec s90;
  s90.theta = kPi / 2;
  const Tensor k0 = gabor_kernel(GaborSpec{}), k90 = gabor_kernel(s90);
  for (int y = -3; y <= 3; ++y)
    for (int x = -3; x <= 3; ++x) {
      CHECK(std::abs(k90.at({y + 3, x + 3}) - oracle::gabor_value(x, y, 2.0, kPi / 2, 0.0, 2 * kPi, 0.5)) <= 1e-12);
      CHECK(std::abs(k90.at({y + 3, x + 3}) - k0.at({-x + 3, y + 3})) <= 1e-12);
    }
}

TEST_CASE("lambda is clamped and differentiable") {
  GaborSpec lo, clamped;
  lo.lambda = 0.01;
  clamped.lambda = kLambdaMin;
  CHECK(bitwise_equal(gabor_kernel(lo), gabor_kernel(clamped)));
  CHECK(adaptive_lambda(Tensor::scalar(20.0)).item() == kLambdaMax);

  const Tensor l({1}, {3.3});
  GaborSpec s;
  s.theta = 0.4;
  GradCheckOptions o;
  o.floor = 1e-5;
  CHECK(grad_check([&] { return probe(gabor_kernel(l, s), 1); }, l, o).max_rel_error <= 1e-6);
}

TEST_CASE("invalid specs") {
  GaborSpec even;
  even.ksize = 6;
  CHECK_THROWS_AS(gabor_kernel(even), Error);
  GaborSpec tiny;
  tiny.ksize = 1;
  CHECK_THROWS_AS(gabor_kernel(tiny), Error);
  GaborSpec flat;
  flat.sigma = 0.0;
  CHECK_THROWS_AS(gabor_kernel(flat), Error);
}

TEST_CASE("subband orientations and strategies") {
  CHECK(subband_orientation(Subband::kHL) == 0.0);
  CHECK(subband_orientation(Subband::kLH) == kPi / 2);
  CHECK(subband_orientation(Subband::kHH) == kPi / 4);
  CHECK_THROWS(subband_orientation(Subband::kLL));

  OrientationConfig mis = parse_orientation("misaligned");
  CHECK(band_orientations(Subband::kLH, mis) == std::vector<double>{0.0});
  CHECK(band_orientations(Subband::kHL, mis) == std::vector<double>{kPi / 2});

  const OrientationConfig uni = parse_orientation("unified:30");
  CHECK(band_orientations(Subband::kHH, uni)[0] == doctest::Approx(kPi / 6));
  CHECK(band_orientations(Subband::kHL, parse_orientation("fused")).size() == 5);
  CHECK(band_orientations(Subband::kHL, parse_orientation("conv")).empty());

  OrientationConfig r1 = parse_orientation("random"), r2 = parse_orientation("random");
  r1.seed = r2.seed = 9;
  CHECK(band_orientations(Subband::kLH, r1) == band_orientations(Subband::kLH, r2));
  CHECK_THROWS(parse_orientation("diagonal"));
  CHECK(to_string(parse_orientation("unified:45")) == "unified:45");
}
