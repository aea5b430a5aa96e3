#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dabformer {

struct BenchRow {
  std::string sweep;  // "channels" or "tokens", prefixed by the timed unit
  int64_t channels = 0;
  int64_t tokens = 0;
  int64_t heads = 1;
  double seconds = 0.0;  // median of the repeats
  int64_t attention_mults = 0;
};

struct BenchFit {
  std::string sweep;
  double slope = 0.0;  // least-squares log-log exponent
};

struct BenchOptions {
  std::vector<int64_t> channel_sweep{8, 16, 32, 64};
  int64_t fixed_tokens = 4096;
  std::vector<int64_t> token_sweep{256, 1024, 4096};
  int64_t fixed_channels = 32;
  int repeats = 5;
  double min_seconds = 0.05;  // each sample loops until it spans at least this long
  bool include_core = true;   // also time the Q K^T / A V core alone
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchFit> fits;
  double slope(const std::string& sweep) const;
};

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

BenchReport run_bench(const BenchOptions& options);

// Header, one line per row, then "fit" lines carrying the slope column.
void write_bench_csv(const BenchReport& report, std::ostream& os);

}  // namespace dabformer
