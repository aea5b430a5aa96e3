#include "dabformer/training.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace dabformer {

namespace fs = std::filesystem;

// ---- config parsing -------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error("bad value '" + value + "' for " + key + " (expected " + want + ")");
}

int64_t to_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a number");
  }
  return out;
}

template <typename T>
std::array<T, kLevels> to_levels(const std::string& key, const std::string& v) {
  std::array<T, kLevels> out{};
  std::stringstream ss(v);
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ',')) {
    if (n >= kLevels) bad_value(key, v, "4 comma-separated integers");
    out[n++] = static_cast<T>(to_int(key, trim(item)));
  }
  if (n != kLevels) bad_value(key, v, "4 comma-separated integers");
  return out;
}

template <typename T>
std::string join_levels(const std::array<T, kLevels>& a) {
  std::string s;
  for (int i = 0; i < kLevels; ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s;
}

std::string num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::full_scale() {
  RunConfig c;
  c.model = ModelConfig::full_scale();
  c.iterations = 1400000;
  c.output_dir = "runs/full";
  return c;
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  corruption.validate();
  if (!(lr_min > 0.0 && lr_init >= lr_min)) throw Error("config: need lr_init >= lr_min > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw Error("config: betas must lie in [0, 1)");
  if (!(eps > 0.0) || weight_decay < 0.0 || !(clip_norm > 0.0)) {
    throw Error("config: eps and clip_norm must be positive, weight_decay non-negative");
  }
  if (iterations < 1 || batch < 1 || log_every < 1 || checkpoint_every < 1) {
    throw Error("config: iterations, batch, log_every and checkpoint_every must be positive");
  }
  if (crop < model.pad_multiple || crop > image_size) {
    throw Error("config: train.crop must lie in [" + std::to_string(model.pad_multiple) + ", " +
                "data.image_size]");
  }
  if (train_images < 1 || val_images < 0) throw Error("config: need train_images >= 1, val_images >= 0");
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "model.base_channels") model.base_channels = to_int(key, v);
  else if (key == "model.blocks") model.blocks = to_levels<int>(key, v);
  else if (key == "model.heads") model.heads = to_levels<int64_t>(key, v);
  else if (key == "model.expansion") model.expansion = to_double(key, v);
  else if (key == "model.patch") model.patch = to_int(key, v);
  else if (key == "model.gabor_ksize") model.gabor_ksize = static_cast<int>(to_int(key, v));
  else if (key == "model.q_path") model.query = parse_query_path(v);
  else if (key == "model.ffn") model.ffn = parse_ffn(v);
  else if (key == "model.gabor_lambda") model.lambda = parse_lambda(v);
  else if (key == "model.gabor_dirs") model.orientation = parse_orientation(v);
  else if (key == "loss.l1") loss.l1 = to_double(key, v);
  else if (key == "loss.perceptual") loss.perceptual = to_double(key, v);
  else if (key == "loss.edge") loss.edge = to_double(key, v);
  else if (key == "loss.ssim") loss.ssim = to_double(key, v);
  else if (key == "loss.extractor_seed") extractor_seed = to_u64(key, v);
  else if (key == "optim.lr_init") lr_init = to_double(key, v);
  else if (key == "optim.lr_min") lr_min = to_double(key, v);
  else if (key == "optim.beta1") beta1 = to_double(key, v);
  else if (key == "optim.beta2") beta2 = to_double(key, v);
  else if (key == "optim.eps") eps = to_double(key, v);
  else if (key == "optim.weight_decay") weight_decay = to_double(key, v);
  else if (key == "optim.clip_norm") clip_norm = to_double(key, v);
  else if (key == "train.iterations") iterations = to_int(key, v);
  else if (key == "train.batch") batch = to_int(key, v);
  else if (key == "train.crop") crop = to_int(key, v);
  else if (key == "train.seed") seed = to_u64(key, v);
  else if (key == "train.log_every") log_every = to_int(key, v);
  else if (key == "train.checkpoint_every") checkpoint_every = to_int(key, v);
  else if (key == "data.generator") generator = parse_generator(v);
  else if (key == "data.train_images") train_images = to_int(key, v);
  else if (key == "data.val_images") val_images = to_int(key, v);
  else if (key == "data.image_size") image_size = to_int(key, v);
  else if (key == "data.seed") data_seed = to_u64(key, v);
  else if (key == "data.corruption") corruption.kind = parse_corruption(v);
  else if (key == "data.coverage_low") corruption.coverage_low = to_double(key, v);
  else if (key == "data.coverage_high") corruption.coverage_high = to_double(key, v);
  else if (key == "data.block_min") corruption.block_min = to_int(key, v);
  else if (key == "data.block_max") corruption.block_max = to_int(key, v);
  else if (key == "data.manifest") manifest = v;
  else if (key == "output.dir") output_dir = v;
  else throw Error("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  const auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  kv("model.base_channels", std::to_string(model.base_channels));
  kv("model.blocks", join_levels(model.blocks));
  kv("model.heads", join_levels(model.heads));
  kv("model.expansion", num(model.expansion));
  kv("model.patch", std::to_string(model.patch));
  kv("model.gabor_ksize", std::to_string(model.gabor_ksize));
  kv("model.q_path", to_string(model.query));
  kv("model.ffn", to_string(model.ffn));
  kv("model.gabor_lambda", to_string(model.lambda));
  kv("model.gabor_dirs", to_string(model.orientation));
  kv("loss.l1", num(loss.l1));
  kv("loss.perceptual", num(loss.perceptual));
  kv("loss.edge", num(loss.edge));
  kv("loss.ssim", num(loss.ssim));
  kv("loss.extractor_seed", std::to_string(extractor_seed));
  kv("optim.lr_init", num(lr_init));
  kv("optim.lr_min", num(lr_min));
  kv("optim.beta1", num(beta1));
  kv("optim.beta2", num(beta2));
  kv("optim.eps", num(eps));
  kv("optim.weight_decay", num(weight_decay));
  kv("optim.clip_norm", num(clip_norm));
  kv("train.iterations", std::to_string(iterations));
  kv("train.batch", std::to_string(batch));
  kv("train.crop", std::to_string(crop));
  kv("train.seed", std::to_string(seed));
  kv("train.log_every", std::to_string(log_every));
  kv("train.checkpoint_every", std::to_string(checkpoint_every));
  kv("data.generator", to_string(generator));
  kv("data.train_images", std::to_string(train_images));
  kv("data.val_images", std::to_string(val_images));
  kv("data.image_size", std::to_string(image_size));
  kv("data.seed", std::to_string(data_seed));
  kv("data.corruption", to_string(corruption.kind));
  kv("data.coverage_low", num(corruption.coverage_low));
  kv("data.coverage_high", num(corruption.coverage_high));
  kv("data.block_min", std::to_string(corruption.block_min));
  kv("data.block_max", std::to_string(corruption.block_max));
  if (!manifest.empty()) kv("data.manifest", manifest);
  kv("output.dir", output_dir);
  return os.str();
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw Error(where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(where + "missing key");
    if (value.empty()) throw Error(where + "missing value for " + key);
    try {
      c.set(key, value);
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

void apply_seed_env(RunConfig& config) {
  if (const char* s = std::getenv("DABFORMER_SEED"); s && *s) {
    try {
      config.seed = to_u64("DABFORMER_SEED", s);
    } catch (const Error& e) {
      throw Error(std::string("environment: ") + e.what());
    }
  }
}

// ---- optimization ---------------------------------------------------------

double cosine_lr(int64_t i, int64_t total, double lr_init, double lr_min) {
  if (total <= 1) return lr_init;
  const double t = static_cast<double>(std::clamp<int64_t>(i, 0, total - 1)) / static_cast<double>(total - 1);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      Tensor h = t;
      for (double& g : h.mutable_grad()) g *= s;
    }
  }
  return norm;
}

AdamW::AdamW(const ParamStore& params, double beta1, double beta2, double eps, double wd)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(wd) {
  for (const auto& [name, t] : params) {
    names_.push_back(name);
    m_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
  }
}

void AdamW::step(ParamStore& params, double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    if (k >= names_.size() || names_[k] != name) throw Error("AdamW: parameter set changed");
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (!t.has_grad()) continue;
    Tensor p = t;
    auto d = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] -= lr * weight_decay_ * d[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      d[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

NamedTensors AdamW::state() const {
  NamedTensors s;
  s.tensors.emplace_back("adam.step", Tensor::full({1}, static_cast<double>(step_)));
  for (std::size_t k = 0; k < names_.size(); ++k) {
    const auto n = static_cast<int64_t>(m_[k].size());
    s.tensors.emplace_back("adam.m." + names_[k], Tensor({n}, m_[k]));
    s.tensors.emplace_back("adam.v." + names_[k], Tensor({n}, v_[k]));
  }
  return s;
}

void AdamW::load_state(const NamedTensors& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : state.tensors) by_name[name] = &t;
  const auto fetch = [&](const std::string& name, std::size_t n) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("optimizer state lacks '" + name + "'");
    if (static_cast<std::size_t>(it->second->numel()) != n) {
      throw Error("optimizer state '" + name + "' has the wrong size");
    }
    return *it->second;
  };
  step_ = static_cast<int64_t>(fetch("adam.step", 1).item());
  for (std::size_t k = 0; k < names_.size(); ++k) {
    const auto m = fetch("adam.m." + names_[k], m_[k].size()).data();
    const auto v = fetch("adam.v." + names_[k], v_[k].size()).data();
    std::copy(m.begin(), m.end(), m_[k].begin());
    std::copy(v.begin(), v.end(), v_[k].begin());
  }
}

// ---- data -----------------------------------------------------------------

namespace {

// Mask of pixels where any channel differs.
Tensor difference_mask(const Tensor& a, const Tensor& b) {
  const int64_t h = a.dim(1), w = a.dim(2);
  Tensor m = Tensor::zeros({h, w});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < h * w; ++i) {
      if (a.data()[c * h * w + i] != b.data()[c * h * w + i]) m.data()[i] = 1.0;
    }
  return m;
}

constexpr uint64_t kTrainSalt = 0x7a11, kValSalt = 0x5a1, kCropSalt = 0xc0, kEvalSalt = 0xe7a1;

}  // namespace

Datasets build_datasets(const RunConfig& config) {
  Datasets d;
  if (!config.manifest.empty()) {
    const auto entries = parse_manifest(config.manifest);
    const auto n = static_cast<int64_t>(entries.size());
    if (n <= config.val_images) throw Error("manifest has too few pairs for the validation split");
    for (int64_t i = 0; i < n; ++i) {
      SamplePair p;
      p.clean = read_image(entries[i].first);
      p.corrupted = read_image(entries[i].second);
      if (p.clean.shape() != p.corrupted.shape()) {
        throw ShapeError("manifest pair " + std::to_string(i) + " has mismatched sizes");
      }
      p.mask = difference_mask(p.clean, p.corrupted);
      (i < n - config.val_images ? d.train : d.val).push_back(std::move(p));
    }
    return d;
  }
  std::vector<Tensor> train, val;
  for (int64_t i = 0; i < config.train_images; ++i) {
    train.push_back(synth_image(config.generator, config.image_size, config.data_seed, i));
  }
  for (int64_t i = 0; i < config.val_images; ++i) {
    val.push_back(synth_image(config.generator, config.image_size, config.data_seed,
                              config.train_images + i));
  }
  CorruptionSpec spec = config.corruption;
  spec.seed = Rng::mix(config.corruption.seed ^ config.data_seed, kTrainSalt);
  d.train = make_pairs(train, spec);
  spec.seed = Rng::mix(config.corruption.seed ^ config.data_seed, kValSalt);
  if (!val.empty()) d.val = make_pairs(val, spec);
  return d;
}

namespace {

Tensor crop_chw(const Tensor& img, int64_t y0, int64_t x0, int64_t size) {
  const int64_t h = img.dim(1), w = img.dim(2);
  Tensor out({3, size, size});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x)
        out.data()[(c * size + y) * size + x] = img.data()[(c * h + y0 + y) * w + x0 + x];
  return out;
}

}  // namespace

Batch make_batch(const std::vector<SamplePair>& data, const RunConfig& config, int64_t iter) {
  if (data.empty()) throw Error("make_batch: empty dataset");
  const auto n = static_cast<int64_t>(data.size());
  Rng crop_rng(Rng::mix(Rng::mix(config.seed, kCropSalt), static_cast<uint64_t>(iter)));
  std::vector<Tensor> inputs, targets;
  int64_t cached_epoch = -1;
  std::vector<std::size_t> order;
  for (int64_t b = 0; b < config.batch; ++b) {
    const int64_t k = iter * config.batch + b;
    const int64_t epoch = k / n;
    if (epoch != cached_epoch) {
      order = epoch_order(data.size(), config.seed, static_cast<uint64_t>(epoch));
      cached_epoch = epoch;
    }
    const SamplePair& p = data[order[static_cast<std::size_t>(k % n)]];
    const int64_t h = p.clean.dim(1), w = p.clean.dim(2);
    if (config.crop > h || config.crop > w) throw Error("make_batch: crop exceeds image size");
    const int64_t y0 = crop_rng.uniform_int(0, h - config.crop);
    const int64_t x0 = crop_rng.uniform_int(0, w - config.crop);
    inputs.push_back(crop_chw(p.corrupted, y0, x0, config.crop));
    targets.push_back(crop_chw(p.clean, y0, x0, config.crop));
  }
  return {stack_images(inputs), stack_images(targets)};
}

// ---- training -------------------------------------------------------------

namespace {

const char* kCsvHeader = "iter,loss,l1,perceptual,edge,ssim_loss,lr,grad_norm,train_psnr";

std::string csv_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string format_metric(double v) { return csv_num(v); }

Trainer::Trainer(RunConfig config, Datasets data)
    : config_(std::move(config)),
      data_(std::move(data)),
      model_((config_.validate(), config_.model), config_.seed),
      extractor_(config_.extractor_seed),
      optimizer_(model_.params(), config_.beta1, config_.beta2, config_.eps, config_.weight_decay) {}

void Trainer::save(int64_t next_iter) const {
  const fs::path out(config_.output_dir);
  save_checkpoint(model_, out / "model.ckpt");
  NamedTensors state = optimizer_.state();
  state.config_hash = config_.model.hash();
  write_tensor_file(out / "state.ckpt", state);
  (void)next_iter;
}

TrainResult Trainer::run(bool resume) {
  const fs::path out(config_.output_dir);
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "config.txt");
    cfg << config_.to_text();
  }
  TrainResult result;
  result.metrics_csv = out / "metrics.csv";
  result.checkpoint = out / "model.ckpt";

  int64_t start = 0;
  std::vector<std::string> kept_rows;
  if (resume) {
    load_checkpoint(model_, out / "model.ckpt");
    const NamedTensors state = read_tensor_file(out / "state.ckpt");
    if (state.config_hash != config_.model.hash()) throw Error("optimizer state belongs to a different model config");
    optimizer_.load_state(state);
    start = optimizer_.steps();
    std::ifstream old(result.metrics_csv);
    std::string line;
    std::getline(old, line);
    while (std::getline(old, line)) {
      if (!line.empty() && std::stoll(line.substr(0, line.find(','))) < start) kept_rows.push_back(line);
    }
  }
  std::ofstream csv(result.metrics_csv, std::ios::trunc);
  csv << kCsvHeader << '\n';
  for (const auto& r : kept_rows) csv << r << '\n';
  csv.flush();

  const int64_t total = config_.iterations;
  const int64_t end = stop_at_ >= 0 ? std::min(stop_at_, total) : total;
  const auto t0 = std::chrono::steady_clock::now();
  ParamStore& params = model_.params();
  for (int64_t it = start; it < end; ++it) {
    const double lr = cosine_lr(it, total, config_.lr_init, config_.lr_min);
    const Batch batch = make_batch(data_.train, config_, it);
    LossTerms terms;
    Tensor output;
    double gnorm = 0.0;
    try {
      output = model_.forward(batch.input);
      terms = total_loss(output, batch.target, config_.loss, extractor_);
      autograd::backward(terms.total);
      gnorm = clip_grad_norm(params, config_.clip_norm);
      if (!std::isfinite(gnorm)) throw NonFiniteError("gradient norm is not finite");
    } catch (const NonFiniteError& e) {
      autograd::clear_tape();
      const fs::path dump = out / "nonfinite_dump.txt";
      std::ofstream d(dump);
      d << "iteration " << it << "\nlr " << csv_num(lr) << "\nerror " << e.what() << "\n";
      for (const auto& [name, t] : params) {
        double sq = 0.0;
        for (double v : t.data()) sq += v * v;
        d << name << " norm " << csv_num(std::sqrt(sq)) << '\n';
      }
      throw Error("non-finite value at iteration " + std::to_string(it) + " (" + e.what() +
                  "); diagnostics in " + dump.string());
    }
    optimizer_.step(params, lr);
    params.zero_grad();

    if (it % config_.log_every == 0 || it == total - 1) {
      const double bp = psnr(output, batch.target);
      result.final_loss = terms.total.item();
      result.final_batch_psnr = bp;
      csv << it << ',' << csv_num(terms.total.item()) << ',' << csv_num(terms.l1.item()) << ','
          << csv_num(terms.perceptual.item()) << ',' << csv_num(terms.edge.item()) << ','
          << csv_num(terms.ssim.item()) << ',' << csv_num(lr) << ',' << csv_num(gnorm) << ','
          << csv_num(bp) << '\n';
      csv.flush();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!quiet_) {
        std::fprintf(stderr, "iter %lld/%lld loss %.5f psnr %.2f lr %.3g (%.1fs)\n",
                     static_cast<long long>(it), static_cast<long long>(total),
                     terms.total.item(), bp, lr, secs);
      }
      if (progress_) progress_(it, terms.total.item(), bp);
    }
    if ((it + 1) % config_.checkpoint_every == 0) save(it + 1);
  }
  save(end);
  result.iterations = end;
  result.train_psnr = evaluate(model_, data_.train).psnr;
  result.val_psnr = data_.val.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : evaluate(model_, data_.val).psnr;
  return result;
}

// ---- evaluation -----------------------------------------------------------

Tensor restore_image(const Dabformer& model, const Tensor& image) {
  autograd::NoGradGuard guard;
  if (image.rank() != 3) throw ShapeError("restore_image: expected [3, H, W], got " + shape_str(image.shape()));
  const Tensor x = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  const Tensor y = clamp(model.forward(x), 0.0, 1.0);
  return reshape(y, image.shape());
}

EvalMetrics evaluate(const Dabformer& model, const std::vector<SamplePair>& pairs,
                     std::vector<Tensor>* outputs) {
  autograd::NoGradGuard guard;
  EvalMetrics m;
  double sp = 0, ss = 0, spm = 0, ssm = 0;
  int64_t nm = 0;
  for (const SamplePair& p : pairs) {
    const Tensor out = restore_image(model, p.corrupted);
    const Shape s4 = {1, out.dim(0), out.dim(1), out.dim(2)};
    const Tensor o4 = reshape(out, s4), g4 = reshape(p.clean, s4);
    sp += psnr(o4, g4);
    ss += ssim(o4, g4).item();
    const double pm = psnr_masked(o4, g4, p.mask);
    if (!std::isnan(pm)) {
      spm += pm;
      ssm += ssim_masked(o4, g4, p.mask);
      ++nm;
    }
    if (outputs) outputs->push_back(out);
    ++m.images;
  }
  if (m.images == 0) return m;
  m.psnr = sp / static_cast<double>(m.images);
  m.ssim = ss / static_cast<double>(m.images);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.psnr_masked = nm ? spm / static_cast<double>(nm) : nan;
  m.ssim_masked = nm ? ssm / static_cast<double>(nm) : nan;
  return m;
}

Tensor make_panel(const Tensor& input, const Tensor& output, const Tensor& truth) {
  const int64_t h = input.dim(1), w = input.dim(2);
  if (output.shape() != input.shape() || truth.shape() != input.shape()) {
    throw ShapeError("make_panel: image shapes differ");
  }
  Tensor panel({3, h, 3 * w});
  const Tensor* parts[3] = {&input, &output, &truth};
  for (int k = 0; k < 3; ++k)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          panel.data()[(c * h + y) * 3 * w + k * w + x] = parts[k]->data()[(c * h + y) * w + x];
  return panel;
}

std::vector<EvalBand> parse_bands(const std::string& text) {
  std::vector<EvalBand> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw Error("bad band '" + item + "' (expected low-high)");
    EvalBand b{to_double("band", trim(item.substr(0, dash))), to_double("band", trim(item.substr(dash + 1)))};
    if (!(b.low >= 0.0 && b.low <= b.high && b.high <= 0.9)) {
      throw Error("band '" + item + "' outside 0 <= low <= high <= 0.9");
    }
    out.push_back(b);
  }
  if (out.empty()) throw Error("no occlusion bands given");
  return out;
}

std::vector<EvalRow> run_eval(const Dabformer& model, const RunConfig& config,
                              const std::vector<std::string>& datasets,
                              const std::vector<EvalBand>& bands, int64_t images,
                              const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<EvalRow> rows;
  std::ofstream csv(out_dir / "report.csv", std::ios::trunc);
  csv << "dataset,band_low,band_high,images,psnr,ssim,psnr_masked,ssim_masked\n";
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    const std::string& name = datasets[di];
    std::vector<Tensor> clean;
    if (name.rfind("manifest:", 0) == 0) {
      for (const auto& e : parse_manifest(name.substr(9))) {
        if (static_cast<int64_t>(clean.size()) >= images) break;
        clean.push_back(read_image(e.first));
      }
    } else {
      const Generator g = parse_generator(name);
      // index range far from the training/validation indices
      for (int64_t i = 0; i < images; ++i) {
        clean.push_back(synth_image(g, config.image_size, config.data_seed, 1000000 + i));
      }
    }
    for (std::size_t bi = 0; bi < bands.size(); ++bi) {
      CorruptionSpec spec = config.corruption;
      spec.coverage_low = bands[bi].low;
      spec.coverage_high = bands[bi].high;
      spec.seed = Rng::mix(Rng::mix(config.data_seed, kEvalSalt), di * 1000 + bi);
      const std::vector<SamplePair> pairs = make_pairs(clean, spec);
      std::vector<Tensor> outputs;
      EvalRow row{name, bands[bi], evaluate(model, pairs, &outputs)};
      csv << name << ',' << csv_num(row.band.low) << ',' << csv_num(row.band.high) << ','
          << row.metrics.images << ',' << csv_num(row.metrics.psnr) << ','
          << csv_num(row.metrics.ssim) << ',' << csv_num(row.metrics.psnr_masked) << ','
          << csv_num(row.metrics.ssim_masked) << '\n';
      if (!pairs.empty()) {
        std::string tag = name.rfind("manifest:", 0) == 0 ? "manifest" : name;
        char band[64];
        std::snprintf(band, sizeof band, "%.2f-%.2f", row.band.low, row.band.high);
        write_image(out_dir / ("panel_" + tag + "_" + band + ".png"),
                    make_panel(pairs[0].corrupted, outputs[0], pairs[0].clean));
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace dabformer
