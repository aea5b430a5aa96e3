#include <cmath>
#include <limits>

#include "dabformer/grad_check.hpp"
#include "dabformer/losses.hpp"
#include "dabformer/oracles.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;

TEST_CASE("ssim closed forms") {
  Rng rng(1);
  const Tensor x = uniform({2, 3, 16, 16}, rng);
  CHECK(std::abs(ssim(x, x).item() - 1.0) <= 1e-12);
  CHECK(ssim_map(x, x).shape() == Shape{2, 3, 6, 6});
  // constant 0 vs 1: C1 / (1 + C1)
  const double s = ssim(Tensor::zeros({1, 1, 12, 12}), Tensor::ones({1, 1, 12, 12})).item();
  CHECK(std::abs(s - 9.999000099990002e-05) <= 1e-15);
  CHECK(std::abs(ssim_loss(x, x).item()) <= 1e-12);
  CHECK_THROWS_AS(ssim(Tensor::zeros({1, 1, 10, 12}), Tensor::zeros({1, 1, 10, 12})), ShapeError);
}

TEST_CASE("ssim against the scalar reference") {
  Rng rng(2);
  const Tensor a = uniform({1, 2, 14, 17}, rng), b = uniform({1, 2, 14, 17}, rng);
  CHECK(std::abs(ssim(a, b).item() - oracle::ssim(a, b)) <= 1e-12);
}

TEST_CASE("psnr") {
  const Tensor z = Tensor::zeros({1, 3, 4, 4});
  // uniform 0.5 error: 10 log10(4)
  CHECK(std::abs(psnr(Tensor::full({1, 3, 4, 4}, 0.5), z) - 6.020599913279624) <= 1e-12);
  CHECK(psnr(z, z) == std::numeric_limits<double>::infinity());
  Rng rng(3);
  const Tensor a = uniform({2, 3, 5, 6}, rng), b = uniform({2, 3, 5, 6}, rng);
  CHECK(std::abs(psnr(a, b) - oracle::psnr(a, b)) <= 1e-12);
}

TEST_CASE("masked metrics") {
  Rng rng(4);
  const Tensor gt = uniform({1, 3, 16, 16}, rng);
  Tensor o = gt.clone();
  Tensor mask = Tensor::zeros({16, 16});
  for (int64_t y = 4; y < 12; ++y)
    for (int64_t x = 4; x < 12; ++x) {
      mask.at({y, x}) = 1.0;
      for (int64_t c = 0; c < 3; ++c) o.at({0, c, y, x}) += 0.1;
    }
  // all error sits inside the mask: 20 dB there, more over the whole image
  CHECK(std::abs(psnr_masked(o, gt, mask) - 20.0) <= 1e-9);
  CHECK(psnr(o, gt) > psnr_masked(o, gt, mask));
  // every valid window centre lies inside this mask
  CHECK(std::abs(ssim_masked(o, gt, mask) - ssim(o, gt).item()) <= 1e-12);
  Tensor corner = Tensor::zeros({16, 16});
  corner.at({5, 5}) = 1.0;
  const Tensor sm = ssim_map(o, gt);
  const double first = (sm.at({0, 0, 0, 0}) + sm.at({0, 1, 0, 0}) + sm.at({0, 2, 0, 0})) / 3;
  CHECK(std::abs(ssim_masked(o, gt, corner) - first) <= 1e-12);
  CHECK(std::isnan(psnr_masked(o, gt, Tensor::zeros({16, 16}))));
  CHECK(std::abs(psnr_masked(o, gt, Tensor::ones({1, 16, 16})) - psnr(o, gt)) <= 1e-12);
}

TEST_CASE("l1, edge and perceptual against the scalar references") {
  Rng rng(5);
  const Tensor o = uniform({2, 3, 16, 16}, rng), gt = uniform({2, 3, 16, 16}, rng);
  CHECK(std::abs(l1_loss(o, gt).item() - oracle::l1(o, gt)) <= 1e-14);

  CHECK(max_abs_diff(sobel_magnitude(o), oracle::sobel_magnitude(o, kSobelEps)) <= 1e-12);
  const Tensor so = oracle::sobel_magnitude(o, kSobelEps), sg = oracle::sobel_magnitude(gt, kSobelEps);
  CHECK(std::abs(edge_loss(o, gt).item() - oracle::l1(so, sg)) <= 1e-12);
  // flat image: sqrt(eps) everywhere
  const Tensor flat = sobel_magnitude(Tensor::full({1, 1, 5, 5}, 0.3));
  for (double v : flat.data()) CHECK(std::abs(v - std::sqrt(kSobelEps)) <= 1e-18);

  const ConvPyramidExtractor ex;
  std::vector<Tensor> w, b;
  for (const auto& s : ex.stages()) {
    w.push_back(s.weight);
    b.push_back(s.bias);
  }
  CHECK(std::abs(perceptual_loss(o, gt, ex).item() - oracle::perceptual(o, gt, w, b)) <= 1e-12);
  CHECK(perceptual_loss(o, o, ex).item() == 0.0);
  CHECK(std::abs(perceptual_loss(o, gt, IdentityExtractor{}).item() - oracle::l1(o, gt)) <= 1e-14);
}

TEST_CASE("total loss is the weighted sum of its terms") {
  Rng rng(6);
  const Tensor o = uniform({1, 3, 16, 16}, rng), gt = uniform({1, 3, 16, 16}, rng);
  const ConvPyramidExtractor ex;
  const LossWeights w;
  CHECK(w.l1 == 10.0);
  CHECK(w.perceptual == 0.6);
  CHECK(w.edge == 0.4);
  CHECK(w.ssim == 0.5);
  const LossTerms t = total_loss(o, gt, w, ex);

  // one-hot weight probes recover each term
  const double probes[4] = {
      total_loss(o, gt, {1, 0, 0, 0}, ex).total.item(), total_loss(o, gt, {0, 1, 0, 0}, ex).total.item(),
      total_loss(o, gt, {0, 0, 1, 0}, ex).total.item(), total_loss(o, gt, {0, 0, 0, 1}, ex).total.item()};
  CHECK(probes[0] == t.l1.item());
  CHECK(probes[1] == t.perceptual.item());
  CHECK(probes[2] == t.edge.item());
  CHECK(probes[3] == t.ssim.item());
  const double expected = 10.0 * probes[0] + 0.6 * probes[1] + 0.4 * probes[2] + 0.5 * probes[3];
  CHECK(std::abs(t.total.item() - expected) <= 1e-12 * std::abs(expected));

  const double doubled = total_loss(o, gt, {20, 1.2, 0.8, 1.0}, ex).total.item();
  CHECK(std::abs(doubled - 2 * t.total.item()) <= 1e-12 * std::abs(doubled));
  CHECK_THROWS(LossWeights{-1, 0, 0, 0}.validate());
}

TEST_CASE("loss gradients") {
  Rng rng(7);
  const Tensor o = uniform({1, 3, 16, 16}, rng, 0.2, 0.8), gt = uniform({1, 3, 16, 16}, rng);
  const ConvPyramidExtractor ex;
  GradCheckOptions opt;
  opt.floor = 1e-5;
  opt.max_elements = 64;
  CHECK(grad_check([&] { return ssim_loss(o, gt); }, o, opt).max_rel_error <= 1e-4);
  CHECK(grad_check([&] { return edge_loss(o, gt); }, o, opt).max_rel_error <= 1e-4);
  CHECK(grad_check([&] { return perceptual_loss(o, gt, ex); }, o, opt).max_rel_error <= 1e-4);
  CHECK(grad_check([&] { return total_loss(o, gt, LossWeights{}, ex).total; }, o, opt).max_rel_error <= 1e-4);
}
