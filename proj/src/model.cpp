#include "dabformer/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dabformer {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.base_channels = 48;
  return c;
}

BlockConfig ModelConfig::block_config(int level) const {
  BlockConfig b;
  b.attention.channels = level_channels(level);
  b.attention.heads = heads[level];
  b.attention.gabor_ksize = gabor_ksize;
  b.attention.ll_ksize = ll_ksize;
  b.attention.query = query;
  b.attention.orientation = orientation;
  b.attention.lambda = lambda;
  b.ffn.channels = level_channels(level);
  b.ffn.expansion = expansion;
  b.ffn.patch = patch;
  b.ffn.kind = ffn;
  return b;
}

void ModelConfig::validate() const {
  if (base_channels < 1) throw Error("model: base_channels must be positive");
  if (image_channels < 1) throw Error("model: image_channels must be positive");
  if (pad_multiple % (1 << (kLevels - 1)) != 0) {
    throw Error("model: pad_multiple must be a multiple of 8 (three 2x downsamplings)");
  }
  for (int l = 0; l < kLevels; ++l) {
    if (blocks[l] < 0) throw Error("model: negative block count");
    if (heads[l] < 1 || level_channels(l) % heads[l] != 0) {
      throw Error("model: level " + std::to_string(l) + " width " +
                  std::to_string(level_channels(l)) + " not divisible by " +
                  std::to_string(heads[l]) + " heads");
    }
    block_config(l).attention.validate();
    block_config(l).ffn.validate();
  }
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "c0=" << base_channels << ";blocks=";
  for (int l = 0; l < kLevels; ++l) os << (l ? "," : "") << blocks[l];
  os << ";heads=";
  for (int l = 0; l < kLevels; ++l) os << (l ? "," : "") << heads[l];
  os << ";expansion=" << expansion << ";patch=" << patch << ";image_channels=" << image_channels
     << ";pad=" << pad_multiple << ";gabor_k=" << gabor_ksize << ";ll_k=" << ll_ksize
     << ";q=" << to_string(query) << ";dirs=" << to_string(orientation)
     << ";dirs_seed=" << orientation.seed << ";lambda=" << to_string(lambda)
     << ";ffn=" << to_string(ffn);
  return os.str();
}

uint64_t fnv1a(std::string_view text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t ModelConfig::hash() const { return fnv1a(canonical()); }

Dabformer::Dabformer(const ModelConfig& config, uint64_t seed)
    : config_(config), params_(std::make_unique<ParamStore>()) {
  config_.validate();
  Rng rng(seed);
  ParamStore& p = *params_;
  const int64_t c0 = config_.base_channels;
  shallow_ = make_conv(p, "shallow", config_.image_channels, c0, 3, rng);
  for (int l = 0; l < kLevels; ++l) {
    const std::string tag = l + 1 < kLevels ? "enc" + std::to_string(l) : "latent";
    for (int i = 0; i < config_.blocks[l]; ++i) {
      encoder_[l].emplace_back(p, tag + ".b" + std::to_string(i), config_.block_config(l), rng);
    }
    if (l + 1 < kLevels) {
      const int64_t c = config_.level_channels(l);
      down_[l] = make_conv(p, "down" + std::to_string(l), 4 * c, 2 * c, 1, rng);
    }
  }
  for (int l = kLevels - 2; l >= 0; --l) {
    const int64_t c = config_.level_channels(l);
    up_[l] = make_conv(p, "up" + std::to_string(l), 2 * c, 4 * c, 1, rng);
    fuse_[l] = make_conv(p, "fuse" + std::to_string(l), 2 * c, c, 1, rng);
    for (int i = 0; i < config_.blocks[l]; ++i) {
      decoder_[l].emplace_back(p, "dec" + std::to_string(l) + ".b" + std::to_string(i),
                               config_.block_config(l), rng);
    }
  }
  out_ = make_conv(p, "out", c0, config_.image_channels, 3, rng);
}

namespace {

Tensor run_blocks(const std::vector<TransformerBlock>& blocks, Tensor x, const std::string& tag) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    try {
      x = blocks[i].forward(x);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(tag + ".b" + std::to_string(i) + ": " + e.what());
    }
  }
  return x;
}

int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

}  // namespace

Tensor Dabformer::forward(const Tensor& image) const { return forward(image, nullptr); }

Tensor Dabformer::forward(const Tensor& image, LevelTrace* trace) const {
  if (image.rank() != 4 || image.dim(1) != config_.image_channels) {
    throw ShapeError("model: expected [B, " + std::to_string(config_.image_channels) +
                     ", H, W] input, got " + shape_str(image.shape()));
  }
  const int64_t h = image.dim(2), w = image.dim(3);
  if (h < config_.pad_multiple || w < config_.pad_multiple) {
    throw ShapeError("model: input " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than " + std::to_string(config_.pad_multiple) + " pixels");
  }
  const int64_t hp = round_up(h, config_.pad_multiple), wp = round_up(w, config_.pad_multiple);
  Tensor x = (hp != h || wp != w) ? pad_reflect(image, hp - h, wp - w) : image;
  if (trace) trace->padded = x;

  std::array<Tensor, kLevels - 1> skips;
  x = shallow_(x);
  for (int l = 0; l < kLevels; ++l) {
    x = run_blocks(encoder_[l], x, l + 1 < kLevels ? "enc" + std::to_string(l) : "latent");
    if (trace) trace->encoder[l] = x;
    if (l + 1 < kLevels) {
      skips[l] = x;
      x = down_[l](pixel_unshuffle(x, 2));
    }
  }
  for (int l = kLevels - 2; l >= 0; --l) {
    const Tensor up = pixel_shuffle(up_[l](x), 2);
    const Tensor parts[2] = {up, skips[l]};
    x = fuse_[l](concat_channels(parts));
    x = run_blocks(decoder_[l], x, "dec" + std::to_string(l));
    if (trace) trace->decoder[l] = x;
  }
  Tensor residual = out_(x);
  if (hp != h || wp != w) residual = crop(residual, h, w);
  if (trace) trace->residual = residual;
  return add(residual, image);
}

std::vector<SummaryRow> Dabformer::summary() const {
  std::vector<SummaryRow> rows;
  int64_t filters = 0;
  for (const auto& [name, t] : *params_) {
    const std::string module = name.substr(0, name.find('.'));
    if (rows.empty() || rows.back().module != module) rows.push_back({module, 0});
    rows.back().params += t.numel();
    if (name.find(".filter.") != std::string::npos) filters += t.numel();
  }
  rows.push_back({"total", param_count(*params_)});
  rows.push_back({"freq_filters", filters});
  return rows;
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    os << r.module;
    for (std::size_t i = r.module.size(); i < 16; ++i) os << ' ';
    os << r.params << '\n';
  }
  return os.str();
}

namespace {

void zero(const Conv2d& conv) {
  Tensor w = conv.weight, b = conv.bias;
  std::fill(w.data().begin(), w.data().end(), 0.0);
  if (b.defined()) std::fill(b.data().begin(), b.data().end(), 0.0);
}

}  // namespace

void Dabformer::zero_output_conv() { zero(out_); }

void Dabformer::zero_block_branches() {
  for (auto& level : encoder_)
    for (auto& b : level) b.zero_residual_branches();
  for (auto& level : decoder_)
    for (auto& b : level) b.zero_residual_branches();
}

// ---- checkpoint I/O ----

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[4] = {'D', 'A', 'B', 'F'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  template <typename T>
  T get(const char* what) {
    T v{};
    bytes(reinterpret_cast<char*>(&v), sizeof(T), what);
    return v;
  }

  void bytes(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw Error("corrupt checkpoint " + path_ + ": truncated while reading " + what);
    }
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error("corrupt checkpoint " + path_ + ": " + why);
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const NamedTensors& contents) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<uint32_t>(os, kCheckpointVersion);
  put<uint64_t>(os, contents.config_hash);
  put<uint32_t>(os, static_cast<uint32_t>(contents.tensors.size()));
  for (const auto& [name, t] : contents.tensors) {
    put<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint32_t>(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) put<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw Error("write failed for " + path.string());
}

NamedTensors read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  Reader r(is, path.string());
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic");
  const auto version = r.get<uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  NamedTensors out;
  out.config_hash = r.get<uint64_t>("config hash");
  const auto count = r.get<uint32_t>("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<uint32_t>("name length");
    if (len == 0 || len > 4096) r.fail("implausible name length " + std::to_string(len));
    std::string name(len, '\0');
    r.bytes(name.data(), len, "name");
    const auto rank = r.get<uint32_t>("rank");
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for " + name);
    Shape shape(rank);
    uint64_t numel = 1;
    for (auto& d : shape) {
      const auto v = r.get<uint64_t>("dims");
      if (v == 0 || v > file_size) r.fail("implausible extent for " + name);
      d = static_cast<int64_t>(v);
      numel *= v;
      if (numel * sizeof(double) > file_size) r.fail("tensor " + name + " exceeds file size");
    }
    Tensor t(shape);
    r.bytes(reinterpret_cast<char*>(t.data().data()), numel * sizeof(double), "payload");
    out.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (is.peek() != std::ifstream::traits_type::eof()) r.fail("trailing bytes");
  return out;
}

void save_checkpoint(const Dabformer& model, const std::filesystem::path& path) {
  NamedTensors c;
  c.config_hash = model.config().hash();
  for (const auto& [name, t] : model.params()) c.tensors.emplace_back(name, t);
  write_tensor_file(path, c);
}

void load_checkpoint(Dabformer& model, const std::filesystem::path& path) {
  const NamedTensors c = read_tensor_file(path);
  if (c.config_hash != model.config().hash()) {
    throw Error("checkpoint " + path.string() + " was written for a different model config");
  }
  ParamStore loaded;
  for (const auto& [name, t] : c.tensors) loaded.add(name, t);
  model.params().assign_from(loaded);
}

}  // namespace dabformer
