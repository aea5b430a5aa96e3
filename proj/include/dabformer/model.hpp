#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dabformer/fdagn.hpp"
#include "dabformer/fdfa.hpp"

namespace dabformer {

inline constexpr int kLevels = 4;

struct ModelConfig {
  int64_t base_channels = 8;
  std::array<int, kLevels> blocks{4, 6, 6, 8};
  std::array<int64_t, kLevels> heads{1, 2, 4, 8};
  double expansion = 2.66;
  int64_t patch = 8;
  int64_t image_channels = 3;
  int64_t pad_multiple = 16;
  int gabor_ksize = 7;
  int ll_ksize = 3;
  // ablation switches
  QueryPath query = QueryPath::kFused;
  OrientationConfig orientation;
  LambdaConfig lambda;
  FfnKind ffn = FfnKind::kFdagn;

  static ModelConfig desk();        // C0 = 8
  static ModelConfig full_scale();  // C0 = 48

  int64_t level_channels(int level) const { return base_channels << level; }
  BlockConfig block_config(int level) const;
  void validate() const;
  // Every field that changes the parameter layout or the forward map.
  std::string canonical() const;
  uint64_t hash() const;
};

// 64-bit FNV-1a.
uint64_t fnv1a(std::string_view text);

struct SummaryRow {
  std::string module;
  int64_t params = 0;
};

class Dabformer {
 public:
  Dabformer(const ModelConfig& config, uint64_t seed);

  // [B, 3, H, W] -> [B, 3, H, W]; H, W >= 16.
  Tensor forward(const Tensor& image) const;

  struct LevelTrace {
    Tensor padded;
    std::array<Tensor, kLevels> encoder;  // block outputs per level (latent last)
    std::array<Tensor, kLevels - 1> decoder;
    Tensor residual;                      // final conv output, cropped
  };
  Tensor forward(const Tensor& image, LevelTrace* trace) const;

  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }
  const ModelConfig& config() const { return config_; }

  // Per-module parameter counts in registration order, FreqFilter total last.
  std::vector<SummaryRow> summary() const;

  // Zero the final reconstruction conv: forward(x) == x.
  void zero_output_conv();
  // Zero the output projections of every block's residual branches.
  void zero_block_branches();

 private:
  ModelConfig config_;
  std::unique_ptr<ParamStore> params_;
  Conv2d shallow_;
  std::array<std::vector<TransformerBlock>, kLevels> encoder_;
  std::array<Conv2d, kLevels - 1> down_;
  std::array<Conv2d, kLevels - 1> up_;
  std::array<Conv2d, kLevels - 1> fuse_;
  std::array<std::vector<TransformerBlock>, kLevels - 1> decoder_;
  Conv2d out_;
};

std::string format_summary(const std::vector<SummaryRow>& rows);

// Checkpoint file: "DABF", u32 version, u64 config hash, u32 tensor count,
// then per tensor: u32 name length, name bytes, u32 rank, u64 dims, f64 data.
// All integers and floats little-endian.
inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensors {
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_tensor_file(const std::filesystem::path& path, const NamedTensors& contents);
NamedTensors read_tensor_file(const std::filesystem::path& path);

void save_checkpoint(const Dabformer& model, const std::filesystem::path& path);
// Refuses files whose config hash differs from the model's.
void load_checkpoint(Dabformer& model, const std::filesystem::path& path);

}  // namespace dabformer
