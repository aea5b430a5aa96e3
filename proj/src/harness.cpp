#include "dabformer/harness.hpp"

#include "dabformer/ops.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dabformer {

namespace fs = std::filesystem;

// ---- image files ----------------------------------------------------------

uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::min(255.0, std::floor(c * 255.0 + 0.5)));
}

namespace {

Tensor from_rgb(const std::vector<uint8_t>& rgb, int64_t h, int64_t w) {
  Tensor img({3, h, w});
  auto d = img.data();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) d[(c * h + y) * w + x] = rgb[(y * w + x) * 3 + c] / 255.0;
  return img;
}

Tensor as_chw(const Tensor& image) {
  if (image.rank() == 4 && image.dim(0) == 1) return reshape(image, {image.dim(1), image.dim(2), image.dim(3)});
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("write_image: expected [3, H, W] image, got " + shape_str(image.shape()));
  }
  return image;
}

std::vector<uint8_t> to_rgb(const Tensor& img) {
  const int64_t h = img.dim(1), w = img.dim(2);
  std::vector<uint8_t> rgb(static_cast<std::size_t>(h * w * 3));
  auto d = img.data();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) rgb[(y * w + x) * 3 + c] = quantize(d[(c * h + y) * w + x]);
  return rgb;
}

Tensor read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("cannot decode PNG " + path.string() + ": " + msg);
  }
  return from_rgb(rgb, image.height, image.width);
}

void write_png(const fs::path& path, const Tensor& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.dim(2));
  image.height = static_cast<png_uint_32>(img.dim(1));
  image.format = PNG_FORMAT_RGB;
  const std::vector<uint8_t> rgb = to_rgb(img);
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Next header token of a PNM file, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& is, const fs::path& path) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n' && ch != '\r') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw Error("truncated PPM header in " + path.string());
  return tok;
}

int64_t pnm_number(std::istream& is, const fs::path& path, const char* what) {
  const std::string tok = pnm_token(is, path);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9) {
    throw Error("bad PPM " + std::string(what) + " '" + tok + "' in " + path.string());
  }
  return std::stoll(tok);
}

Tensor read_ppm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  if (pnm_token(is, path) != "P6") throw Error("unsupported image format (not P6 PPM or PNG): " + path.string());
  const int64_t w = pnm_number(is, path, "width");
  const int64_t h = pnm_number(is, path, "height");
  const int64_t maxval = pnm_number(is, path, "maxval");
  if (w < 1 || h < 1) throw Error("empty PPM image " + path.string());
  if (maxval != 255) {
    throw Error("unsupported PPM maxval " + std::to_string(maxval) + " in " + path.string() +
                " (only 8-bit 255 is supported)");
  }
  // pnm_token consumed exactly one whitespace byte after maxval.
  std::vector<uint8_t> rgb(static_cast<std::size_t>(w * h * 3));
  is.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (static_cast<std::size_t>(is.gcount()) != rgb.size()) throw Error("truncated PPM data in " + path.string());
  return from_rgb(rgb, h, w);
}

void write_ppm(const fs::path& path, const Tensor& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << "P6\n" << img.dim(2) << ' ' << img.dim(1) << "\n255\n";
  const std::vector<uint8_t> rgb = to_rgb(img);
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw Error("write failed for " + path.string());
}

bool has_png_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png";
}

}  // namespace

Tensor read_image(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open image " + path.string());
  unsigned char magic[8] = {};
  is.read(reinterpret_cast<char*>(magic), 8);
  const auto got = is.gcount();
  is.close();
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return read_png(path);
  if (got >= 2 && magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
  throw Error("unsupported image format (expected PNG or P6 PPM): " + path.string());
}

void write_image(const fs::path& path, const Tensor& image) {
  const Tensor img = as_chw(image);
  if (has_png_extension(path)) {
    write_png(path, img);
  } else {
    write_ppm(path, img);
  }
}

// ---- corruption -----------------------------------------------------------

std::string to_string(CorruptionKind kind) {
  return kind == CorruptionKind::kNoiseBlocks ? "noise_blocks" : "rain_streaks";
}

CorruptionKind parse_corruption(const std::string& text) {
  if (text == "noise_blocks") return CorruptionKind::kNoiseBlocks;
  if (text == "rain_streaks") return CorruptionKind::kRainStreaks;
  throw Error("unknown corruption kind '" + text + "' (expected noise_blocks|rain_streaks)");
}

void CorruptionSpec::validate() const {
  if (!(coverage_low >= 0.0 && coverage_low <= coverage_high && coverage_high <= 0.9)) {
    throw Error("corruption coverage must satisfy 0 <= low <= high <= 0.9");
  }
  if (block_min < 1 || block_max < block_min) throw Error("corruption: bad block size range");
  if (streak_length_min < 1 || streak_length_max < streak_length_min) {
    throw Error("corruption: bad streak length range");
  }
  if (!(streak_intensity_min >= 0.0 && streak_intensity_min <= streak_intensity_max)) {
    throw Error("corruption: bad streak intensity range");
  }
}

namespace {

// Pixels (y, x) covered by one candidate corruption shape.
using Footprint = std::vector<std::pair<int64_t, int64_t>>;

Footprint block_footprint(int64_t y0, int64_t x0, int64_t bh, int64_t bw) {
  Footprint f;
  for (int64_t y = y0; y < y0 + bh; ++y)
    for (int64_t x = x0; x < x0 + bw; ++x) f.emplace_back(y, x);
  return f;
}

Footprint streak_footprint(double y0, double x0, double angle, int64_t length, int64_t h, int64_t w) {
  Footprint f;
  const double dy = std::sin(angle), dx = std::cos(angle);
  int64_t py = -1, px = -1;
  for (int64_t t = 0; t < length; ++t) {
    const auto y = static_cast<int64_t>(std::floor(y0 + dy * t + 0.5));
    const auto x = static_cast<int64_t>(std::floor(x0 + dx * t + 0.5));
    if (y < 0 || y >= h || x < 0 || x >= w) break;
    if (y == py && x == px) continue;
    f.emplace_back(y, x);
    py = y;
    px = x;
  }
  return f;
}

int64_t newly_covered(const Footprint& f, const std::vector<uint8_t>& mask, int64_t w) {
  int64_t n = 0;
  for (auto [y, x] : f) {
    if (!mask[y * w + x]) ++n;
  }
  return n;
}

}  // namespace

SamplePair corrupt(const Tensor& clean, const CorruptionSpec& spec) {
  Rng rng(spec.seed);
  return corrupt(clean, spec, rng);
}

SamplePair corrupt(const Tensor& clean, const CorruptionSpec& spec, Rng& rng) {
  spec.validate();
  if (clean.rank() != 3 || clean.dim(0) != 3) {
    throw ShapeError("corrupt: expected [3, H, W] image, got " + shape_str(clean.shape()));
  }
  const int64_t h = clean.dim(1), w = clean.dim(2), total = h * w;
  const int64_t need = static_cast<int64_t>(std::ceil(spec.coverage_low * total - 1e-9));
  const int64_t cap = static_cast<int64_t>(std::floor(spec.coverage_high * total + 1e-9));
  if (need > cap) {
    throw Error("corrupt: coverage range [" + std::to_string(spec.coverage_low) + ", " +
                std::to_string(spec.coverage_high) + "] contains no pixel count for a " +
                std::to_string(h) + "x" + std::to_string(w) + " image");
  }
  if (need > 0 && spec.kind == CorruptionKind::kNoiseBlocks &&
      (spec.block_min > h || spec.block_min > w)) {
    throw Error("corrupt: minimum block size " + std::to_string(spec.block_min) +
                " exceeds the image extent");
  }

  SamplePair out;
  out.clean = clean.clone();
  out.corrupted = clean.clone();
  out.mask = Tensor::zeros({h, w});
  std::vector<uint8_t> mask(static_cast<std::size_t>(total), 0);
  std::vector<double> rain(static_cast<std::size_t>(total), 0.0);
  int64_t covered = 0;
  const double base = spec.streak_angle_deg * std::numbers::pi / 180.0;
  const double jitter = spec.streak_jitter_deg * std::numbers::pi / 180.0;

  while (covered < need) {
    Footprint f;
    double intensity = 0.0;
    if (spec.kind == CorruptionKind::kNoiseBlocks) {
      int64_t bh = rng.uniform_int(spec.block_min, std::min(spec.block_max, h));
      int64_t bw = rng.uniform_int(spec.block_min, std::min(spec.block_max, w));
      const int64_t y0 = rng.uniform_int(0, h - bh), x0 = rng.uniform_int(0, w - bw);
      // Shrink a block that would overshoot the upper bound (down to 1x1).
      f = block_footprint(y0, x0, bh, bw);
      while (covered + newly_covered(f, mask, w) > cap && (bh > 1 || bw > 1)) {
        bh = std::max<int64_t>(1, bh / 2);
        bw = std::max<int64_t>(1, bw / 2);
        f = block_footprint(y0, x0, bh, bw);
      }
    } else {
      const double angle = base + rng.uniform(-jitter, jitter);
      int64_t len = rng.uniform_int(spec.streak_length_min, spec.streak_length_max);
      const double y0 = rng.uniform(0.0, static_cast<double>(h - 1));
      const double x0 = rng.uniform(0.0, static_cast<double>(w - 1));
      intensity = rng.uniform(spec.streak_intensity_min, spec.streak_intensity_max);
      f = streak_footprint(y0, x0, angle, len, h, w);
      while (covered + newly_covered(f, mask, w) > cap && len > 1) {
        len /= 2;
        f = streak_footprint(y0, x0, angle, len, h, w);
      }
    }
    const int64_t add = newly_covered(f, mask, w);
    if (add == 0 || covered + add > cap) continue;
    for (auto [y, x] : f) {
      const int64_t i = y * w + x;
      if (spec.kind == CorruptionKind::kNoiseBlocks) {
        if (!mask[i]) {
          for (int64_t c = 0; c < 3; ++c) out.corrupted.data()[c * total + i] = rng.uniform();
        }
      } else {
        rain[i] += intensity;
      }
      mask[i] = 1;
    }
    covered += add;
  }
  auto cd = out.corrupted.data();
  for (int64_t i = 0; i < total; ++i) {
    if (!mask[i]) continue;
    out.mask.data()[i] = 1.0;
    if (spec.kind == CorruptionKind::kRainStreaks) {
      for (int64_t c = 0; c < 3; ++c) cd[c * total + i] = std::min(1.0, cd[c * total + i] + rain[i]);
    }
  }
  return out;
}

double mask_fraction(const Tensor& mask) {
  int64_t n = 0;
  for (double v : mask.data()) n += v != 0.0;
  return static_cast<double>(n) / static_cast<double>(mask.numel());
}

// ---- synthetic corpus -----------------------------------------------------

std::string to_string(Generator g) {
  switch (g) {
    case Generator::kGradients: return "gradients";
    case Generator::kCheckerboards: return "checkerboards";
    case Generator::kFilteredNoise: return "filtered_noise";
    case Generator::kMixed: return "mixed";
  }
  return "?";
}

Generator parse_generator(const std::string& text) {
  if (text == "gradients") return Generator::kGradients;
  if (text == "checkerboards") return Generator::kCheckerboards;
  if (text == "filtered_noise") return Generator::kFilteredNoise;
  if (text == "mixed") return Generator::kMixed;
  throw Error("unknown generator '" + text +
              "' (expected gradients|checkerboards|filtered_noise|mixed)");
}

namespace {

using Plane = std::vector<double>;  // 3 * size * size, channel-major

void fill_gradient(Plane& p, int64_t n, Rng& rng) {
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cy = std::sin(angle), cx = std::cos(angle);
  double lo[3], hi[3];
  for (int c = 0; c < 3; ++c) {
    lo[c] = rng.uniform(0.05, 0.5);
    hi[c] = rng.uniform(0.5, 0.95);
  }
  // soft radial bump on top of the ramp
  const double by = rng.uniform(0.2, 0.8) * n, bx = rng.uniform(0.2, 0.8) * n;
  const double br = rng.uniform(0.15, 0.35) * n, amp = rng.uniform(-0.15, 0.15);
  const double half = 0.5 * static_cast<double>(n - 1);
  const double reach = half * (std::abs(cy) + std::abs(cx)) + 1e-9;
  for (int64_t y = 0; y < n; ++y)
    for (int64_t x = 0; x < n; ++x) {
      const double t = 0.5 + 0.5 * ((y - half) * cy + (x - half) * cx) / reach;
      const double r2 = ((y - by) * (y - by) + (x - bx) * (x - bx)) / (br * br);
      const double bump = amp * std::exp(-0.5 * r2);
      for (int c = 0; c < 3; ++c) {
        p[(c * n + y) * n + x] = std::clamp(lo[c] + (hi[c] - lo[c]) * t + bump, 0.0, 1.0);
      }
    }
}

void fill_checkerboard(Plane& p, int64_t n, Rng& rng, int64_t y0 = 0, int64_t x0 = 0,
                       int64_t y1 = -1, int64_t x1 = -1) {
  if (y1 < 0) y1 = n;
  if (x1 < 0) x1 = n;
  const int64_t cell = rng.uniform_int(4, std::max<int64_t>(4, n / 6));
  double a[3], b[3];
  for (int c = 0; c < 3; ++c) {
    a[c] = rng.uniform(0.0, 0.45);
    b[c] = rng.uniform(0.55, 1.0);
  }
  for (int64_t y = y0; y < y1; ++y)
    for (int64_t x = x0; x < x1; ++x) {
      const bool odd = (((y - y0) / cell) + ((x - x0) / cell)) % 2 != 0;
      for (int c = 0; c < 3; ++c) p[(c * n + y) * n + x] = odd ? b[c] : a[c];
    }
}

// White noise smeared along a random direction: a directional texture.
void fill_filtered_noise(Plane& p, int64_t n, Rng& rng, int64_t y0 = 0, int64_t x0 = 0,
                         int64_t y1 = -1, int64_t x1 = -1) {
  if (y1 < 0) y1 = n;
  if (x1 < 0) x1 = n;
  static const int64_t dirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  const auto& d = dirs[rng.uniform_int(0, 3)];
  const int64_t taps = 2;  // kernel half-length
  for (int c = 0; c < 3; ++c) {
    Plane noise(static_cast<std::size_t>(n * n));
    for (double& v : noise) v = rng.uniform(-1.0, 1.0);
    const double centre = rng.uniform(0.3, 0.7), amp = rng.uniform(0.25, 0.45);
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t x = x0; x < x1; ++x) {
        double acc = 0.0;
        for (int64_t t = -taps; t <= taps; ++t) {
          const int64_t yy = std::clamp<int64_t>(y + t * d[0], 0, n - 1);
          const int64_t xx = std::clamp<int64_t>(x + t * d[1], 0, n - 1);
          acc += noise[yy * n + xx];
        }
        acc /= static_cast<double>(2 * taps + 1);
        p[(c * n + y) * n + x] = std::clamp(centre + 1.5 * amp * acc, 0.0, 1.0);
      }
  }
}

}  // namespace

Tensor synth_image(Generator g, int64_t size, uint64_t seed, int64_t index) {
  if (size < 1) throw Error("synth_image: size must be positive");
  Rng rng(Rng::mix(Rng::mix(seed, static_cast<uint64_t>(g)), static_cast<uint64_t>(index)));
  Plane p(static_cast<std::size_t>(3 * size * size), 0.0);
  switch (g) {
    case Generator::kGradients:
      fill_gradient(p, size, rng);
      break;
    case Generator::kCheckerboards:
      fill_checkerboard(p, size, rng);
      break;
    case Generator::kFilteredNoise:
      fill_filtered_noise(p, size, rng);
      break;
    case Generator::kMixed: {
      fill_gradient(p, size, rng);
      // one checkerboard and one textured rectangle over the smooth base
      for (int k = 0; k < 2; ++k) {
        const int64_t rh = rng.uniform_int(size / 4, size / 2), rw = rng.uniform_int(size / 4, size / 2);
        const int64_t y0 = rng.uniform_int(0, size - rh), x0 = rng.uniform_int(0, size - rw);
        if (k == 0) {
          fill_checkerboard(p, size, rng, y0, x0, y0 + rh, x0 + rw);
        } else {
          fill_filtered_noise(p, size, rng, y0, x0, y0 + rh, x0 + rw);
        }
      }
      break;
    }
  }
  return Tensor({3, size, size}, std::move(p));
}

std::vector<Tensor> synth_corpus(int64_t n, int64_t size, Generator g, uint64_t seed) {
  if (n < 1) throw Error("synth_corpus: n must be >= 1");
  std::vector<Tensor> out;
  for (int64_t i = 0; i < n; ++i) out.push_back(synth_image(g, size, seed, i));
  return out;
}

// ---- datasets -------------------------------------------------------------

std::vector<SamplePair> make_pairs(const std::vector<Tensor>& clean, const CorruptionSpec& spec) {
  std::vector<SamplePair> out;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CorruptionSpec s = spec;
    s.seed = Rng::mix(spec.seed, i);
    out.push_back(corrupt(clean[i], s));
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, uint64_t seed, uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::mix(seed, epoch));
  // Fisher-Yates with our own draws (std::shuffle is implementation-defined)
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<ManifestEntry> parse_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open manifest " + path.string());
  const fs::path dir = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;
    if (!(ls >> b) || (ls >> extra)) {
      throw Error(path.string() + ":" + std::to_string(lineno) +
                  ": expected '<clean path> <corrupted path>'");
    }
    const auto resolve = [&](const std::string& s) {
      fs::path p(s);
      return p.is_absolute() ? p : dir / p;
    };
    out.emplace_back(resolve(a), resolve(b));
  }
  return out;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw Error("stack_images: no images");
  const Shape s = images.front().shape();
  if (s.size() != 3) throw ShapeError("stack_images: expected [C, H, W] images");
  Shape out_shape = {static_cast<int64_t>(images.size()), s[0], s[1], s[2]};
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(shape_numel(out_shape)));
  for (const Tensor& t : images) {
    if (t.shape() != s) throw ShapeError("stack_images: shapes differ");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(out_shape, std::move(data));
}

Tensor unstack_image(const Tensor& batch, int64_t n) {
  if (batch.rank() != 4 || n < 0 || n >= batch.dim(0)) {
    throw ShapeError("unstack_image: bad index or shape " + shape_str(batch.shape()));
  }
  const int64_t per = batch.numel() / batch.dim(0);
  std::vector<double> data(batch.data().begin() + n * per, batch.data().begin() + (n + 1) * per);
  return Tensor({batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(data));
}

}  // namespace dabformer
