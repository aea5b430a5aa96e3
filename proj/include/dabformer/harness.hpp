#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dabformer/random.hpp"
#include "dabformer/tensor.hpp"

namespace dabformer {

// ---- image files ----------------------------------------------------------
// Images are [3, H, W] tensors with values in [0, 1].

// 8-bit PNG (any colour type, converted to RGB) or binary PPM (P6, maxval <= 255).
Tensor read_image(const std::filesystem::path& path);
// Format chosen by extension: .png, otherwise PPM. Values are clamped to
// [0, 1] and quantized with round-half-up.
void write_image(const std::filesystem::path& path, const Tensor& image);

uint8_t quantize(double v);

// ---- corruption -----------------------------------------------------------

enum class CorruptionKind { kNoiseBlocks, kRainStreaks };

std::string to_string(CorruptionKind kind);
CorruptionKind parse_corruption(const std::string& text);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kNoiseBlocks;
  double coverage_low = 0.4;
  double coverage_high = 0.5;
  // noise blocks: side lengths drawn uniformly from [block_min, block_max]
  int64_t block_min = 4;
  int64_t block_max = 16;
  // rain streaks (desk stand-in values)
  double streak_angle_deg = 75.0;
  double streak_jitter_deg = 10.0;
  int64_t streak_length_min = 6;
  int64_t streak_length_max = 20;
  double streak_intensity_min = 0.2;
  double streak_intensity_max = 0.8;
  uint64_t seed = 0;

  void validate() const;
};

struct SamplePair {
  Tensor clean;      // [3, H, W]
  Tensor corrupted;  // [3, H, W]
  Tensor mask;       // [H, W], 1 where corrupted
};

// Deterministic given spec.seed.
SamplePair corrupt(const Tensor& clean, const CorruptionSpec& spec);
SamplePair corrupt(const Tensor& clean, const CorruptionSpec& spec, Rng& rng);

double mask_fraction(const Tensor& mask);

// ---- synthetic corpus -----------------------------------------------------

enum class Generator { kGradients, kCheckerboards, kFilteredNoise, kMixed };

std::string to_string(Generator g);
Generator parse_generator(const std::string& text);

// Image i depends only on (generator, size, seed, i).
Tensor synth_image(Generator g, int64_t size, uint64_t seed, int64_t index);
std::vector<Tensor> synth_corpus(int64_t n, int64_t size, Generator g, uint64_t seed);

// ---- datasets -------------------------------------------------------------

// Pair i is corrupted with seed mix(spec.seed, i).
std::vector<SamplePair> make_pairs(const std::vector<Tensor>& clean, const CorruptionSpec& spec);

// Permutation of [0, n) that depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, uint64_t seed, uint64_t epoch);

// Line-oriented manifest: "<clean path> <corrupted path>" per line, '#'
// comments, relative paths resolved against the manifest's directory.
using ManifestEntry = std::pair<std::filesystem::path, std::filesystem::path>;
std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& path);

// Stacks [3, H, W] images into [N, 3, H, W].
Tensor stack_images(const std::vector<Tensor>& images);
// Extracts image n of a batch as [3, H, W].
Tensor unstack_image(const Tensor& batch, int64_t n);

}  // namespace dabformer
