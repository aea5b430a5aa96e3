#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dabformer/harness.hpp"
#include "dabformer/losses.hpp"
#include "dabformer/model.hpp"

namespace dabformer {

// ---- run configuration ----------------------------------------------------
//
// Flat "key = value" text, one pair per line, '#' starts a comment. Keys:
//   model.base_channels  model.blocks (a,b,c,d)  model.heads (a,b,c,d)
//   model.expansion  model.patch  model.gabor_ksize  model.q_path
//   model.ffn  model.gabor_lambda  model.gabor_dirs
//   loss.l1  loss.perceptual  loss.edge  loss.ssim  loss.extractor_seed
//   optim.lr_init  optim.lr_min  optim.beta1  optim.beta2  optim.eps
//   optim.weight_decay  optim.clip_norm
//   train.iterations  train.batch  train.crop  train.seed  train.log_every
//   train.checkpoint_every
//   data.generator  data.train_images  data.val_images  data.image_size
//   data.seed  data.corruption  data.coverage_low  data.coverage_high
//   data.block_min  data.block_max  data.manifest
//   output.dir

struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  LossWeights loss;
  uint64_t extractor_seed = 0x5eed;

  double lr_init = 2e-4;
  double lr_min = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;

  int64_t iterations = 20000;
  int64_t batch = 2;
  int64_t crop = 64;
  uint64_t seed = 0;
  int64_t log_every = 50;
  int64_t checkpoint_every = 1000;

  Generator generator = Generator::kMixed;
  int64_t train_images = 16;
  int64_t val_images = 4;
  int64_t image_size = 64;
  uint64_t data_seed = 1;
  CorruptionSpec corruption;
  std::string manifest;  // optional: image pairs from disk instead of synthetic

  std::string output_dir = "runs/desk";

  static RunConfig desk();
  static RunConfig full_scale();

  void validate() const;
  // Applies one key/value; throws Error naming the key on bad input.
  void set(const std::string& key, const std::string& value);
  // Canonical text form; parse(to_text()) reproduces the config.
  std::string to_text() const;
};

// Errors carry "<source>:<line>: ..." prefixes.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
// DABFORMER_SEED, when set, replaces train.seed.
void apply_seed_env(RunConfig& config);

// ---- optimization ---------------------------------------------------------

// lr(i) = lr_min + (lr_init - lr_min) (1 + cos(pi i / (N - 1))) / 2, so
// lr(0) = lr_init and lr(N - 1) = lr_min.
double cosine_lr(int64_t iteration, int64_t total, double lr_init, double lr_min);

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

class AdamW {
 public:
  AdamW(const ParamStore& params, double beta1, double beta2, double eps, double weight_decay);

  // Decoupled decay then the Adam update, for every parameter with a grad.
  void step(ParamStore& params, double lr);

  int64_t steps() const { return step_; }

  // Moments as "adam.m.<name>" / "adam.v.<name>" plus "adam.step".
  NamedTensors state() const;
  void load_state(const NamedTensors& state);

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t step_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_, v_;
};

// ---- data -----------------------------------------------------------------

struct Datasets {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
};

// Synthetic corpus (train images, then val images from a disjoint index
// range) or manifest pairs, per the config.
Datasets build_datasets(const RunConfig& config);

// Inputs/targets for iteration `iter`: sample order from epoch_order and
// crop offsets from a per-iteration generator.
struct Batch {
  Tensor input;   // corrupted [B, 3, crop, crop]
  Tensor target;  // clean
};
Batch make_batch(const std::vector<SamplePair>& data, const RunConfig& config, int64_t iter);

// ---- training -------------------------------------------------------------

struct TrainResult {
  int64_t iterations = 0;
  double final_loss = 0.0;
  double final_batch_psnr = 0.0;  // PSNR of the last logged batch
  double train_psnr = 0.0;        // full-image PSNR over the whole train set after training
  double val_psnr = 0.0;
  std::filesystem::path metrics_csv;
  std::filesystem::path checkpoint;
};

class Trainer {
 public:
  Trainer(RunConfig config, Datasets data);

  // Runs until config.iterations. When `resume` is set, continues from
  // <output>/model.ckpt and <output>/state.ckpt.
  TrainResult run(bool resume = false);

  // Stops after this iteration (exclusive); used to test resumption.
  void set_stop_at(int64_t iter) { stop_at_ = iter; }
  void set_progress(std::function<void(int64_t, double, double)> cb) { progress_ = std::move(cb); }
  void set_quiet(bool quiet) { quiet_ = quiet; }

  Dabformer& model() { return model_; }

 private:
  void save(int64_t next_iter) const;

  RunConfig config_;
  Datasets data_;
  Dabformer model_;
  ConvPyramidExtractor extractor_;
  AdamW optimizer_;
  int64_t stop_at_ = -1;
  bool quiet_ = false;
  std::function<void(int64_t, double, double)> progress_;
};

// ---- evaluation -----------------------------------------------------------

struct EvalMetrics {
  int64_t images = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_masked = 0.0;  // NaN when no pixel is masked
  double ssim_masked = 0.0;
};

// Runs the model image by image (clamped to [0, 1]) and averages metrics.
// Means containing +inf are +inf. Outputs are returned when requested.
EvalMetrics evaluate(const Dabformer& model, const std::vector<SamplePair>& pairs,
                     std::vector<Tensor>* outputs = nullptr);

// Forward of one [3, H, W] image: pad, model, crop, clamp to [0, 1].
Tensor restore_image(const Dabformer& model, const Tensor& image);

// input | output | ground truth, side by side.
Tensor make_panel(const Tensor& input, const Tensor& output, const Tensor& truth);

struct EvalBand {
  double low = 0.0, high = 0.0;
};
std::vector<EvalBand> parse_bands(const std::string& text);  // "0.2-0.3,0.4-0.5"

struct EvalRow {
  std::string dataset;
  EvalBand band;
  EvalMetrics metrics;
};

// One row per (dataset, band); writes report.csv and panel PNGs into `out_dir`.
std::vector<EvalRow> run_eval(const Dabformer& model, const RunConfig& config,
                              const std::vector<std::string>& datasets,
                              const std::vector<EvalBand>& bands, int64_t images,
                              const std::filesystem::path& out_dir);

std::string format_metric(double v);

}  // namespace dabformer
