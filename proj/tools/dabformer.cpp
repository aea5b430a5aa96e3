#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dabformer/bench.hpp"
#include "dabformer/suites.hpp"
#include "dabformer/training.hpp"

using namespace dabformer;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string q_path, ffn, gabor_lambda, gabor_dirs, output;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "run configuration file (desk defaults when omitted)");
    app->add_option("--set", sets, "override one key, e.g. --set train.iterations=100");
    app->add_option("--q-path", q_path, "plain|dwt|gabor|fused");
    app->add_option("--ffn", ffn, "ffn|fdagn");
    app->add_option("--gabor-lambda", gabor_lambda, "adaptive|fixed:<v>");
    app->add_option("--gabor-dirs", gabor_dirs, "matched|misaligned|unified:<deg>|random|fused|conv");
    app->add_option("--output", output, "output directory");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig::desk() : load_run_config(config);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!q_path.empty()) c.set("model.q_path", q_path);
    if (!ffn.empty()) c.set("model.ffn", ffn);
    if (!gabor_lambda.empty()) c.set("model.gabor_lambda", gabor_lambda);
    if (!gabor_dirs.empty()) c.set("model.gabor_dirs", gabor_dirs);
    if (!output.empty()) c.output_dir = output;
    apply_seed_env(c);
    c.validate();
    return c;
  }
};

int cmd_train(const ConfigFlags& flags, bool resume) {
  const RunConfig config = flags.resolve();
  Trainer trainer(config, build_datasets(config));
  const TrainResult r = trainer.run(resume);
  std::printf("iterations %lld\ntrain_psnr %s\nval_psnr %s\ncheckpoint %s\nmetrics %s\n",
              static_cast<long long>(r.iterations), format_metric(r.train_psnr).c_str(),
              format_metric(r.val_psnr).c_str(), r.checkpoint.c_str(), r.metrics_csv.c_str());
  return 0;
}

Dabformer load_model(const RunConfig& config, const std::string& checkpoint) {
  Dabformer model(config.model, config.seed);
  load_checkpoint(model, checkpoint);
  return model;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dabformer image restoration: train, evaluate, infer, verify, bench"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train a model and write checkpoints plus metrics.csv");
  train_flags.add_to(train);
  train->add_flag("--resume", resume, "continue from <output>/model.ckpt and state.ckpt");

  ConfigFlags eval_flags;
  std::string eval_ckpt, bands = "0.2-0.3,0.3-0.4,0.4-0.5,0.5-0.6,0.6-0.7";
  std::vector<std::string> datasets{"mixed"};
  int64_t eval_images = 8;
  auto* eval = app.add_subcommand("eval", "per-band PSNR/SSIM report with panels");
  eval_flags.add_to(eval);
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--dataset", datasets, "generator name or manifest:<path>; repeatable");
  eval->add_option("--bands", bands, "occlusion bands, e.g. 0.2-0.3,0.4-0.5");
  eval->add_option("--images", eval_images, "images per dataset");

  ConfigFlags infer_flags;
  std::string infer_ckpt, image_in, image_out;
  auto* infer = app.add_subcommand("infer", "restore one image");
  infer_flags.add_to(infer);
  infer->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer->add_option("image_in", image_in, "input image (.png or .ppm)")->required();
  infer->add_option("image_out", image_out, "output image (.png or .ppm)")->required();

  std::vector<std::string> suites;
  auto* verify = app.add_subcommand("verify", "run the oracle suites and print a pass/fail matrix");
  verify->add_option("--suite", suites, "restrict to named suites");

  std::string bench_out;
  int repeats = 5;
  double min_seconds = 0.05;
  bool no_core = false;
  auto* bench = app.add_subcommand("bench", "time FDFA across channel and token sweeps (CSV)");
  bench->add_option("--output", bench_out, "write CSV here instead of stdout");
  bench->add_option("--repeats", repeats, "samples per point (median is reported)");
  bench->add_option("--min-seconds", min_seconds, "minimum wall time per sample");
  bench->add_flag("--no-core", no_core, "skip the attention-core-only sweep");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_flags, resume);

    if (eval->parsed()) {
      const RunConfig config = eval_flags.resolve();
      const Dabformer model = load_model(config, eval_ckpt);
      const fs::path out = eval_flags.output.empty() ? fs::path(config.output_dir) / "eval" : fs::path(eval_flags.output);
      const auto rows = run_eval(model, config, datasets, parse_bands(bands), eval_images, out);
      std::ifstream report(out / "report.csv");
      std::cout << report.rdbuf();
      return rows.empty() ? 1 : 0;
    }

    if (infer->parsed()) {
      const RunConfig config = infer_flags.resolve();
      const Dabformer model = load_model(config, infer_ckpt);
      const Tensor image = read_image(image_in);
      if (image.dim(1) < 16 || image.dim(2) < 16) {
        throw Error("infer: image is " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(1)) +
                    ", both sides must be at least 16 px");
      }
      write_image(image_out, restore_image(model, image));
      return 0;
    }

    if (verify->parsed()) {
      std::vector<verify::CheckResult> results;
      if (suites.empty()) {
        results = verify::run_all();
      } else {
        for (const auto& s : suites) {
          auto part = verify::run_suite(s);
          results.insert(results.end(), part.begin(), part.end());
        }
      }
      verify::print_results(results, std::cout);
      return verify::all_passed(results) ? 0 : 1;
    }

    if (bench->parsed()) {
      BenchOptions opt;
      opt.repeats = repeats;
      opt.min_seconds = min_seconds;
      opt.include_core = !no_core;
      const BenchReport report = run_bench(opt);
      if (bench_out.empty()) {
        write_bench_csv(report, std::cout);
      } else {
        std::ofstream os(bench_out);
        write_bench_csv(report, os);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
