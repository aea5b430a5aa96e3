#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dabformer/bench.hpp"
#include "dabformer/oracles.hpp"
#include "dabformer/training.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dabformer;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig =
    "model.base_channels = 4\n"
    "model.blocks = 1,1,1,1\n"
    "train.iterations = 6\n"
    "train.batch = 1\n"
    "train.crop = 16\n"
    "train.log_every = 1\n"
    "train.checkpoint_every = 3\n"
    "data.train_images = 2\n"
    "data.val_images = 1\n"
    "data.image_size = 32\n";

RunConfig tiny(const fs::path& out) {
  RunConfig c = parse_run_config(kTinyConfig, "tiny");
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

struct Run {
  int status = -1;
  std::string out;
};

Run cli(const std::string& args) {
  Run r;
  const std::string cmd = std::string(DABFORMER_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.find(',') == std::string::npos) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1)
      cells.push_back(line.substr(start, comma - start));
    cells.push_back(line.substr(start));
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config text") {
  const RunConfig c = parse_run_config(kTinyConfig);
  CHECK(c.model.base_channels == 4);
  CHECK(c.model.blocks == std::array<int, 4>{1, 1, 1, 1});
  CHECK(c.lr_init == 2e-4);

  const RunConfig back = parse_run_config(c.to_text());
  CHECK(back.to_text() == c.to_text());

  CHECK_THROWS_WITH_AS(parse_run_config("# ok\ntrain.batch = 2\nnonsense\n", "f.cfg"),
                       doctest::Contains("f.cfg:3:"), Error);
  CHECK_THROWS_WITH_AS(parse_run_config("train.bogus = 1\n", "g.cfg"), doctest::Contains("g.cfg:1: unknown config key"),
                       Error);
  CHECK_THROWS_WITH_AS(parse_run_config("\n\ntrain.batch = two\n", "h.cfg"), doctest::Contains("h.cfg:3:"), Error);
  CHECK_THROWS(parse_run_config("optim.lr_min = 1e-3\n"));

  RunConfig s = c;
  ::setenv("DABFORMER_SEED", "77", 1);
  apply_seed_env(s);
  CHECK(s.seed == 77);
  ::setenv("DABFORMER_SEED", "x", 1);
  CHECK_THROWS(apply_seed_env(s));
  ::unsetenv("DABFORMER_SEED");
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 1001, 2e-4, 1e-6) == 2e-4);
  CHECK(std::abs(cosine_lr(1000, 1001, 2e-4, 1e-6) - 1e-6) <= 1e-20);
  CHECK(std::abs(cosine_lr(500, 1001, 2e-4, 1e-6) - 1.005e-4) <= 1e-18);
  for (int64_t i : {0, 17, 250, 777, 1000})
    CHECK(std::abs(cosine_lr(i, 1001, 2e-4, 1e-6) - oracle::cosine_lr(i, 1001, 2e-4, 1e-6)) <= 1e-18);
}

TEST_CASE("gradient clipping and AdamW") {
  ParamStore p;
  p.add("w", Tensor({2}, {1.0, -2.0}));
  Tensor w = p.get("w");
  autograd::backward(sum(mul(w, Tensor({2}, {3.0, 4.0}))));
  CHECK(clip_grad_norm(p, 1.0) == 5.0);
  const double scale = 1.0 / (5.0 + 1e-6);
  const double g0 = 3.0 * scale, g1 = 4.0 * scale;
  CHECK(std::abs(w.grad()[0] - g0) <= 1e-15);
  CHECK(std::abs(w.grad()[1] - g1) <= 1e-15);

  // first step: decay, then m_hat / (sqrt(v_hat) + eps) = g / (|g| + eps)
  AdamW opt(p, 0.9, 0.999, 1e-8, 0.1);
  opt.step(p, 0.01);
  const double w0 = 1.0 * (1 - 0.01 * 0.1) - 0.01 * g0 / (g0 + 1e-8);
  const double w1 = -2.0 * (1 - 0.01 * 0.1) - 0.01 * g1 / (g1 + 1e-8);
  CHECK(std::abs(w.data()[0] - w0) <= 1e-15);
  CHECK(std::abs(w.data()[1] - w1) <= 1e-15);
  CHECK(opt.steps() == 1);

  AdamW fresh(p, 0.9, 0.999, 1e-8, 0.1);
  fresh.load_state(opt.state());
  CHECK(fresh.steps() == 1);
}

TEST_CASE("training is deterministic and resumable") {
  TempDir dir("train");
  const auto train = [&](const std::string& name, int64_t stop, bool resume) {
    const RunConfig c = tiny(dir.path / name);
    Trainer t(c, build_datasets(c));
    t.set_quiet(true);
    if (stop >= 0) t.set_stop_at(stop);
    return t.run(resume);
  };
  const TrainResult a = train("a", -1, false);
  const TrainResult b = train("b", -1, false);
  CHECK(a.iterations == 6);
  CHECK(slurp(a.metrics_csv) == slurp(b.metrics_csv));
  CHECK(slurp(a.checkpoint) == slurp(b.checkpoint));
  CHECK(csv_rows(slurp(a.metrics_csv)).size() == 7);

  train("c", 4, false);
  const TrainResult c = train("c", -1, true);
  CHECK(slurp(c.metrics_csv) == slurp(a.metrics_csv));
  CHECK(slurp(c.checkpoint) == slurp(a.checkpoint));
  CHECK(c.train_psnr == a.train_psnr);
}

TEST_CASE("evaluation rows and identity model") {
  TempDir dir("eval");
  RunConfig c = tiny(dir.path);
  Dabformer m(c.model, 1);
  m.zero_output_conv();
  const auto rows = run_eval(m, c, {"gradients", "checkerboards"}, parse_bands("0-0,0.2-0.3,0.4-0.5"), 2, dir.path);
  REQUIRE(rows.size() == 6);
  CHECK(csv_rows(slurp(dir.path / "report.csv")).size() == 7);
  CHECK(std::isinf(rows[0].metrics.psnr));
  CHECK(rows[0].metrics.ssim == 1.0);
  CHECK(std::isnan(rows[0].metrics.psnr_masked));
  for (std::size_t i : {1u, 2u, 4u, 5u}) {
    CHECK(rows[i].metrics.images == 2);
    CHECK(rows[i].metrics.psnr_masked <= rows[i].metrics.psnr);
  }
  CHECK(fs::exists(dir.path / "panel_gradients_0.20-0.30.png"));
  CHECK_THROWS(parse_bands("0.5-0.2"));
  CHECK_THROWS(parse_bands(""));
}

TEST_CASE("command line") {
  TempDir dir("cli");
  const fs::path cfg = dir.path / "tiny.cfg";
  std::ofstream(cfg) << kTinyConfig;
  const std::string common = "--config " + cfg.string() + " --set train.iterations=3";

  SUBCASE("train twice gives identical metrics") {
    const Run a = cli("train " + common + " --output " + (dir.path / "a").string());
    const Run b = cli("train " + common + " --output " + (dir.path / "b").string());
    REQUIRE(a.status == 0);
    REQUIRE(b.status == 0);
    CHECK(slurp(dir.path / "a" / "metrics.csv") == slurp(dir.path / "b" / "metrics.csv"));

    const fs::path ckpt = dir.path / "a" / "model.ckpt";
    const Run e = cli("eval " + common + " --checkpoint " + ckpt.string() +
                      " --dataset mixed --bands 0.2-0.3 --images 1 --output " + (dir.path / "ev").string());
    CHECK(e.status == 0);
    const auto rows = csv_rows(e.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][0] == "dataset");
    CHECK(rows[1][0] == "mixed");

    const Run bad = cli("eval --checkpoint " + ckpt.string() + " --set model.base_channels=8");
    CHECK(bad.status == 2);
    CHECK(bad.out.find("different model config") != std::string::npos);
  }
  SUBCASE("infer with an identity checkpoint reproduces the image") {
    RunConfig c = parse_run_config(kTinyConfig);
    Dabformer m(c.model, 3);
    m.zero_output_conv();
    save_checkpoint(m, dir.path / "id.ckpt");
    Rng rng(1);
    write_image(dir.path / "in.png", uniform({3, 21, 18}, rng));
    const Run r = cli("infer " + common + " --checkpoint " + (dir.path / "id.ckpt").string() + " " +
                      (dir.path / "in.png").string() + " " + (dir.path / "out.png").string());
    REQUIRE(r.status == 0);
    CHECK(slurp(dir.path / "in.png") == slurp(dir.path / "out.png"));

    write_image(dir.path / "small.png", uniform({3, 12, 40}, rng));
    const Run s = cli("infer " + common + " --checkpoint " + (dir.path / "id.ckpt").string() + " " +
                      (dir.path / "small.png").string() + " " + (dir.path / "o2.png").string());
    CHECK(s.status == 2);
    CHECK(s.out.find("16 px") != std::string::npos);
  }
  SUBCASE("config errors carry line numbers") {
    std::ofstream(dir.path / "bad.cfg") << "train.batch = 1\ntrain.crop = banana\n";
    const Run r = cli("train --config " + (dir.path / "bad.cfg").string());
    CHECK(r.status == 2);
    CHECK(r.out.find("bad.cfg:2:") != std::string::npos);
  }
  SUBCASE("verify a single suite") {
    const Run r = cli("verify --suite spectral");
    CHECK(r.status == 0);
    CHECK(r.out.find("spectral") != std::string::npos);
  }
}

TEST_CASE("bench csv") {
  BenchOptions o;
  o.channel_sweep = {4, 8};
  o.token_sweep = {64, 256};
  o.fixed_tokens = 64;
  o.fixed_channels = 4;
  o.repeats = 1;
  o.min_seconds = 0.0;
  const BenchReport r = run_bench(o);
  std::ostringstream os;
  write_bench_csv(r, os);
  const auto rows = csv_rows(os.str());
  REQUIRE(rows.size() >= 5);
  CHECK(rows[0][0] == "kind");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].size() == 8);
    CHECK((rows[i][0] == "row" || rows[i][0] == "fit"));
  }
  CHECK(std::abs(loglog_slope({1, 2, 4}, {3, 12, 48}) - 2.0) <= 1e-12);
}
