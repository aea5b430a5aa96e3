#include <algorithm>
#include <fstream>

#include "dabformer/harness.hpp"
#include "dabformer/losses.hpp"
#include "dabformer/oracles.hpp"
#include "dabformer/spectral.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;

namespace {

double hh_energy(const Tensor& img) {
  const Subbands s = dwt2(reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)}));
  double e = 0;
  for (double v : s.hh.data()) e += v * v;
  return e;
}

}  // namespace

TEST_CASE("noise block coverage stays in range over 100 seeds") {
  const Tensor clean = synth_image(Generator::kMixed, 64, 3, 0);
  CorruptionSpec spec;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    spec.seed = seed;
    const SamplePair p = corrupt(clean, spec);
    int64_t n = 0;
    for (double v : p.mask.data()) n += v != 0.0;
    const double f = static_cast<double>(n) / (64.0 * 64.0);
    CHECK(f >= 0.4);
    CHECK(f <= 0.5);
    CHECK(mask_fraction(p.mask) == f);
    // untouched outside the mask
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < 64; ++y)
        for (int64_t x = 0; x < 64; ++x)
          if (p.mask.at({y, x}) == 0.0 && p.corrupted.at({c, y, x}) != clean.at({c, y, x})) FAIL("pixel changed outside mask");
  }
}

TEST_CASE("corruption determinism and edge cases") {
  const Tensor clean = synth_image(Generator::kGradients, 32, 1, 0);
  CorruptionSpec spec;
  spec.seed = 42;
  CHECK(bitwise_equal(corrupt(clean, spec).mask, corrupt(clean, spec).mask));
  CHECK(bitwise_equal(corrupt(clean, spec).corrupted, corrupt(clean, spec).corrupted));

  CorruptionSpec none;
  none.coverage_low = none.coverage_high = 0.0;
  const SamplePair p = corrupt(clean, none);
  CHECK(bitwise_equal(p.corrupted, clean));
  CHECK(mask_fraction(p.mask) == 0.0);

  CorruptionSpec big;
  big.block_min = big.block_max = 40;
  CHECK_THROWS_AS(corrupt(clean, big), Error);
  CorruptionSpec bad;
  bad.coverage_low = 0.6;
  bad.coverage_high = 0.5;
  CHECK_THROWS(bad.validate());
  bad.coverage_low = 0.1;
  bad.coverage_high = 0.95;
  CHECK_THROWS(bad.validate());

  CorruptionSpec rain;
  rain.kind = parse_corruption("rain_streaks");
  rain.coverage_low = 0.05;
  rain.coverage_high = 0.2;
  const SamplePair r = corrupt(synth_image(Generator::kMixed, 64, 2, 1), rain);
  CHECK(mask_fraction(r.mask) > 0.0);
  for (double v : r.corrupted.data()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(to_string(CorruptionKind::kNoiseBlocks) == "noise_blocks");
}

TEST_CASE("synthetic generators") {
  for (Generator g : {Generator::kGradients, Generator::kCheckerboards, Generator::kFilteredNoise, Generator::kMixed}) {
    const auto a = synth_corpus(4, 32, g, 7), b = synth_corpus(4, 32, g, 7);
    REQUIRE(a.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(bitwise_equal(a[i], b[i]));
    CHECK_FALSE(bitwise_equal(a[0], a[1]));
    CHECK(parse_generator(to_string(g)) == g);
  }
  CHECK_THROWS(parse_generator("plasma"));

  // texture carries more diagonal detail than a smooth ramp
  for (int i = 0; i < 4; ++i)
    CHECK(hh_energy(synth_image(Generator::kFilteredNoise, 64, 5, i)) >
          hh_energy(synth_image(Generator::kGradients, 64, 5, i)));
}

TEST_CASE("checkerboard edges") {
  const Tensor img = synth_image(Generator::kCheckerboards, 32, 9, 0);
  const Tensor s = sobel_magnitude(reshape(img, {1, 3, 32, 32}));
  double inside = 0, border = 0;
  for (int64_t y = 0; y < 32; ++y)
    for (int64_t x = 0; x < 32; ++x) {
      bool flat = true;
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t yy = std::clamp<int64_t>(y + dy, 0, 31), xx = std::clamp<int64_t>(x + dx, 0, 31);
          flat = flat && img.at({0, yy, xx}) == img.at({0, y, x});
        }
      const double m = s.at({0, 0, y, x}) - std::sqrt(kSobelEps);
      if (flat) inside = std::max(inside, std::abs(m));
      else border = std::max(border, m);
    }
  CHECK(inside <= 1e-12);
  CHECK(border > 0.1);
}

TEST_CASE("image files") {
  TempDir dir("harness");
  Rng rng(3);
  const Tensor img = uniform({3, 13, 17}, rng);
  for (const char* name : {"a.png", "a.ppm"}) {
    const auto p = dir.path / name;
    write_image(p, img);
    const Tensor back = read_image(p);
    CHECK(back.shape() == img.shape());
    CHECK(max_abs_diff(back, img) <= 0.5 / 255 + 1e-12);
    for (const Tensor& flat : {Tensor::zeros({3, 4, 5}), Tensor::ones({3, 4, 5})}) {
      write_image(p, flat);
      CHECK(bitwise_equal(read_image(p), flat));
    }
  }
  // an independent P6 parser agrees
  write_image(dir.path / "b.ppm", img);
  CHECK(bitwise_equal(oracle::parse_ppm(dir.path / "b.ppm"), read_image(dir.path / "b.ppm")));

  CHECK(quantize(0.5 / 255) == 1);
  CHECK(quantize(-0.2) == 0);
  CHECK(quantize(1.7) == 255);

  std::ofstream(dir.path / "junk.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_image(dir.path / "junk.ppm"), Error);
  std::ofstream(dir.path / "short.ppm", std::ios::binary) << "P6\n4 4\n255\n" << std::string(10, 'x');
  CHECK_THROWS_AS(read_image(dir.path / "short.ppm"), Error);
  CHECK_THROWS_AS(read_image(dir.path / "missing.png"), Error);
}

TEST_CASE("dataset plumbing") {
  const auto order = epoch_order(10, 3, 1);
  CHECK(order == epoch_order(10, 3, 1));
  CHECK(order != epoch_order(10, 3, 2));
  auto sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);

  CorruptionSpec spec;
  spec.seed = 5;
  const auto clean = synth_corpus(3, 32, Generator::kMixed, 1);
  const auto pairs = make_pairs(clean, spec);
  REQUIRE(pairs.size() == 3);
  CHECK_FALSE(bitwise_equal(pairs[0].mask, pairs[1].mask));
  CHECK(bitwise_equal(pairs[2].clean, clean[2]));

  const Tensor batch = stack_images(clean);
  CHECK(batch.shape() == Shape{3, 3, 32, 32});
  CHECK(bitwise_equal(unstack_image(batch, 1), clean[1]));

  TempDir dir("manifest");
  std::ofstream(dir.path / "m.txt") << "# pairs\n\nclean/a.png  bad/a.png\n/abs/c.png /abs/d.png\n";
  const auto m = parse_manifest(dir.path / "m.txt");
  REQUIRE(m.size() == 2);
  CHECK(m[0].first == dir.path / "clean/a.png");
  CHECK(m[1].second == std::filesystem::path("/abs/d.png"));
  std::ofstream(dir.path / "bad.txt") << "only_one_path\n";
  CHECK_THROWS_WITH_AS(parse_manifest(dir.path / "bad.txt"), doctest::Contains("bad.txt:1:"), Error);
}
