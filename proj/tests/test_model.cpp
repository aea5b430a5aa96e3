#include <fstream>

#include "dabformer/grad_check.hpp"
#include "dabformer/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;

namespace {

ModelConfig tiny(int64_t c0 = 4) {
  ModelConfig cfg = ModelConfig::desk();
  cfg.base_channels = c0;
  cfg.blocks = {1, 1, 1, 1};
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("encoder levels halve the extent and double the width") {
  const ModelConfig cfg = ModelConfig::desk();
  Dabformer m(cfg, 1);
  Rng rng(1);
  const Tensor x = uniform({1, 3, 40, 36}, rng);
  Dabformer::LevelTrace t;
  const Tensor y = m.forward(x, &t);
  CHECK(t.padded.shape() == Shape{1, 3, 48, 48});
  for (int l = 0; l < kLevels; ++l) {
    CHECK(t.encoder[l].dim(1) == 8 << l);
    CHECK(t.encoder[l].dim(2) == 48 >> l);
    CHECK(t.encoder[l].dim(3) == 48 >> l);
  }
  for (int l = 0; l < kLevels - 1; ++l) CHECK(t.decoder[l].shape() == t.encoder[l].shape());
  CHECK(t.residual.shape() == x.shape());
  CHECK(max_abs_diff(y, add(x, t.residual)) <= 1e-15);
}

TEST_CASE("output shape equals input shape") {
  Dabformer m(tiny(), 2);
  Rng rng(2);
  for (auto [h, w] : {std::pair<int64_t, int64_t>{17, 17}, {32, 32}, {48, 48}, {70, 45}}) {
    const Tensor x = uniform({1, 3, h, w}, rng);
    CHECK(m.forward(x).shape() == x.shape());
  }
  CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 3, 15, 32})), ShapeError);
  CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 1, 32, 32})), ShapeError);
}

TEST_CASE("zeroed residual paths give the identity") {
  Rng rng(3);
  const Tensor x = uniform({2, 3, 20, 18}, rng);
  SUBCASE("output conv") {
    Dabformer m(tiny(), 3);
    m.zero_output_conv();
    CHECK(bitwise_equal(m.forward(x), x));
  }
  SUBCASE("block branches leave a linear conv chain") {
    Dabformer a(tiny(), 3), b(tiny(), 3);
    b.zero_block_branches();
    // a different map than the random-init model, but still shape preserving
    CHECK(b.forward(x).shape() == x.shape());
    CHECK(max_abs_diff(a.forward(x), b.forward(x)) > 0.0);
  }
}

TEST_CASE("seeded construction is deterministic") {
  Dabformer a(tiny(), 7), b(tiny(), 7), c(tiny(), 8);
  Rng rng(4);
  const Tensor x = uniform({1, 3, 16, 16}, rng);
  CHECK(bitwise_equal(a.forward(x), b.forward(x)));
  CHECK_FALSE(bitwise_equal(a.forward(x), c.forward(x)));
}

TEST_CASE("checkpoint roundtrip") {
  TempDir dir("model");
  Dabformer m(tiny(), 5);
  Rng rng(5);
  for (const auto& [name, t] : m.params()) {
    Tensor h = t;
    for (double& v : h.data()) v += 0.05 * rng.normal();
  }
  const auto p1 = dir.path / "a.ckpt", p2 = dir.path / "b.ckpt";
  save_checkpoint(m, p1);

  Dabformer n(tiny(), 99);
  load_checkpoint(n, p1);
  save_checkpoint(n, p2);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(param_count(n.params()) == param_count(m.params()));
  const Tensor x = uniform({1, 3, 24, 16}, rng);
  CHECK(bitwise_equal(m.forward(x), n.forward(x)));

  SUBCASE("truncated file") {
    const std::string bytes = slurp(p1);
    const auto cut = dir.path / "cut.ckpt";
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_WITH_AS(read_tensor_file(cut), doctest::Contains("truncated"), Error);
  }
  SUBCASE("bad magic") {
    std::string bytes = slurp(p1);
    bytes[0] = 'X';
    const auto bad = dir.path / "bad.ckpt";
    std::ofstream(bad, std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_tensor_file(bad), Error);
  }
  SUBCASE("config hash mismatch") {
    Dabformer other(tiny(8), 5);
    CHECK_THROWS_WITH_AS(load_checkpoint(other, p1), doctest::Contains("different model config"), Error);
  }
}

TEST_CASE("config hash tracks layout-relevant fields") {
  ModelConfig a = tiny(), b = tiny();
  CHECK(a.hash() == b.hash());
  b.ffn = FfnKind::kPlain;
  CHECK(a.hash() != b.hash());
  b = tiny();
  b.query = QueryPath::kWaveletOnly;
  CHECK(a.canonical() != b.canonical());
  // standard FNV-1a test vectors
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  ModelConfig odd = tiny();
  odd.heads = {3, 2, 4, 8};
  CHECK_THROWS(odd.validate());
}

TEST_CASE("parameter summary") {
  Dabformer m(ModelConfig::desk(), 1);
  const auto rows = m.summary();
  REQUIRE(rows.size() >= 3);
  int64_t sum = 0;
  for (std::size_t i = 0; i + 2 < rows.size(); ++i) sum += rows[i].params;
  CHECK(rows[rows.size() - 2].module == "total");
  CHECK(rows[rows.size() - 2].params == sum);
  CHECK(sum == param_count(m.params()));
  CHECK(rows.back().module == "freq_filters");
  CHECK(rows.back().params > 0);
  CHECK(format_summary(rows).find("total") != std::string::npos);

  // the shallow conv alone: 3 * 8 * 9 + 8
  CHECK(rows.front().params == 224);

  ModelConfig plain = ModelConfig::desk();
  plain.ffn = FfnKind::kPlain;
  Dabformer p(plain, 1);
  CHECK(p.summary().back().params == 0);
}

TEST_CASE("end-to-end finite differences, C0 = 4") {
  ModelConfig cfg = ModelConfig::desk();
  cfg.base_channels = 4;
  Dabformer m(cfg, 11);
  Rng rng(11);
  for (const auto& [name, t] : m.params()) {
    Tensor h = t;
    for (double& v : h.data()) v += 0.1 * rng.normal();
  }
  const Tensor x = uniform({1, 3, 16, 16}, rng);
  GradCheckOptions o;
  o.floor = 1e-4;
  o.max_elements = 24;
  const auto rep = grad_check([&] { return probe(m.forward(x), 3); }, x, o);
  CHECK(rep.max_rel_error <= 1e-4);
}
