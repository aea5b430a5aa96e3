#include "dabformer/grad_check.hpp"
#include "dabformer/oracles.hpp"
#include "dabformer/spectral.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;

namespace {
double energy(const Tensor& t) {
  double e = 0;
  for (double v : t.data()) e += v * v;
  return e;
}
}  // namespace

TEST_CASE("dwt2 closed forms") {
  const Subbands ones = dwt2(Tensor::ones({1, 1, 2, 2}));
  CHECK(ones.ll.item() == 2.0);
  CHECK(ones.hl.item() == 0.0);
  CHECK(ones.lh.item() == 0.0);
  CHECK(ones.hh.item() == 0.0);

  // hl = (a-b+c-d)/2 = -1 and lh = (a+b-c-d)/2 = -2
  const Subbands s = dwt2(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(s.ll.item() == 5.0);
  CHECK(s.hl.item() == -1.0);
  CHECK(s.lh.item() == -2.0);
  CHECK(s.hh.item() == 0.0);
  const auto o = oracle::haar_block(1, 2, 3, 4);
  CHECK(o[1] == -1.0);
  CHECK(o[2] == -2.0);
}

TEST_CASE("dwt2 energy and roundtrip") {
  Rng rng(1);
  const Tensor x = randn({1, 1, 8, 8}, rng);
  const Subbands s = dwt2(x);
  const double rel = std::abs(energy(x) - energy(s.ll) - energy(s.hl) - energy(s.lh) - energy(s.hh)) / energy(x);
  CHECK(rel <= 1e-12);

  for (Shape shape : {Shape{2, 3, 16, 16}, Shape{1, 2, 64, 4}, Shape{3, 1, 2, 62}}) {
    const Tensor r = randn(shape, rng);
    CHECK(max_abs_diff(idwt2(dwt2(r)), r) <= 1e-12);
  }
  CHECK_THROWS(dwt2(Tensor::zeros({1, 1, 3, 4})));
}

TEST_CASE("idwt2") {
  const Tensor z = Tensor::zeros({1, 1, 1, 1});
  CHECK(bitwise_equal(idwt2({Tensor::full({1, 1, 1, 1}, 2.0), z, z, z}), Tensor::ones({1, 1, 2, 2})));

  Rng rng(2);
  const auto rand_bands = [&] {
    return Subbands{randn({1, 2, 3, 3}, rng), randn({1, 2, 3, 3}, rng), randn({1, 2, 3, 3}, rng), randn({1, 2, 3, 3}, rng)};
  };
  const Subbands a = rand_bands(), b = rand_bands();
  const Subbands sum_ab{add(a.ll, b.ll), add(a.hl, b.hl), add(a.lh, b.lh), add(a.hh, b.hh)};
  CHECK(max_abs_diff(idwt2(sum_ab), add(idwt2(a), idwt2(b))) <= 1e-12);
  CHECK_THROWS(idwt2({a.ll, a.hl, a.lh, Tensor::zeros({1, 2, 3, 2})}));
}

TEST_CASE("rfft2 against a brute-force DFT") {
  Rng rng(3);
  for (auto [h, w] : {std::pair<int64_t, int64_t>{8, 8}, {4, 4}, {2, 8}, {3, 5}, {1, 1}}) {
    const Tensor x = randn({1, 1, h, w}, rng);
    const ComplexMap f = rfft2(x);
    CHECK(f.real.shape() == Shape{1, 1, h, w / 2 + 1});
    const auto ref = oracle::dft2(x.data().data(), h, w);
    double m = 0;
    for (int64_t u = 0; u < h; ++u)
      for (int64_t v = 0; v <= w / 2; ++v) {
        m = std::max(m, std::abs(f.real.data()[u * (w / 2 + 1) + v] - ref[u * w + v].real()));
        m = std::max(m, std::abs(f.imag.data()[u * (w / 2 + 1) + v] - ref[u * w + v].imag()));
      }
    CHECK(m <= 1e-10);
    CHECK(max_abs_diff(irfft2(f, h, w), x) <= 1e-10);
  }
}

TEST_CASE("rfft2 trivial spectra") {
  const ComplexMap c = rfft2(Tensor::full({1, 1, 4, 6}, 0.5));
  CHECK(c.real.data()[0] == doctest::Approx(0.5 * 24).epsilon(1e-15));
  for (std::size_t i = 1; i < c.real.data().size(); ++i) {
    CHECK(std::abs(c.real.data()[i]) <= 1e-12);
    CHECK(std::abs(c.imag.data()[i]) <= 1e-12);
  }
  Tensor delta = Tensor::zeros({1, 1, 4, 4});
  delta.at({0, 0, 0, 0}) = 1.0;
  const ComplexMap d = rfft2(delta);
  for (double v : d.real.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  for (double v : d.imag.data()) CHECK(std::abs(v) <= 1e-15);
}

TEST_CASE("complex pointwise filter") {
  Rng rng(4);
  const Tensor x = randn({2, 2, 4, 4}, rng);
  const ComplexMap f = rfft2(x);
  const Shape fs{2, 4, 3};
  const ComplexMap id = complex_pointwise_filter(f, {Tensor::ones(fs), Tensor::zeros(fs)});
  CHECK(bitwise_equal(id.real, f.real));
  CHECK(bitwise_equal(id.imag, f.imag));

  const Tensor re = randn({1, 1, 4, 3}, rng);
  const ComplexMap rot = complex_pointwise_filter({re, Tensor::zeros({1, 1, 4, 3})},
                                                  {Tensor::zeros({1, 1, 4, 3}), Tensor::ones({1, 1, 4, 3})});
  for (double v : rot.real.data()) CHECK(v == 0.0);
  CHECK(bitwise_equal(rot.imag, re));

  // convolution theorem on 4x4
  const Tensor a = randn({1, 1, 4, 4}, rng), k = randn({1, 1, 4, 4}, rng);
  const Tensor y = irfft2(complex_pointwise_filter(rfft2(a), rfft2(k)), 4, 4);
  const std::vector<double> av(a.data().begin(), a.data().end()), kv(k.data().begin(), k.data().end());
  CHECK(max_abs_diff(y.data(), oracle::circular_conv(av, kv, 4, 4)) <= 1e-10);

  CHECK_THROWS_AS(complex_pointwise_filter(f, {Tensor::ones({2, 4, 2}), Tensor::zeros({2, 4, 2})}), ShapeError);
}

TEST_CASE("transform gradients") {
  Rng rng(5);
  GradCheckOptions o;
  o.floor = 1e-5;
  const Tensor x = randn({1, 2, 4, 6}, rng);
  CHECK(grad_check([&] { return probe(dwt2(x).hh, 1); }, x, o).passed);
  CHECK(grad_check([&] { return probe(rfft2(x).imag, 2); }, x, o).passed);
  const Tensor re = randn({1, 2, 4, 4}, rng), im = randn({1, 2, 4, 4}, rng);
  CHECK(grad_check([&] { return probe(irfft2({re, im}, 4, 6), 3); }, im, o).passed);
}

TEST_CASE("1-D transform handles odd lengths") {
  std::vector<std::complex<double>> v{{1, 0}, {2, 0}, {3, 0}};
  fft::transform(v, false);
  CHECK(v[0].real() == doctest::Approx(6.0));
  fft::transform(v, true);
  CHECK(v[1].real() / 3.0 == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(fft::is_power_of_two(64));
  CHECK_FALSE(fft::is_power_of_two(48));
}
