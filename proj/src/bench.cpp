#include "dabformer/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>

#include "dabformer/fdfa.hpp"
#include "dabformer/ops.hpp"
#include "dabformer/param_store.hpp"
#include "dabformer/random.hpp"

namespace dabformer {

namespace {

Tensor random_input(int64_t c, int64_t side, Rng& rng) {
  Tensor x({1, c, side, side});
  for (double& v : x.data()) v = rng.normal();
  return x;
}

template <typename F>
double median_seconds(const BenchOptions& opt, F&& fn) {
  using clock = std::chrono::steady_clock;
  fn();  // warm-up (plan caches, allocator)
  std::vector<double> samples;
  for (int r = 0; r < opt.repeats; ++r) {
    int64_t n = 0;
    const auto start = clock::now();
    double elapsed = 0.0;
    do {
      fn();
      ++n;
      elapsed = std::chrono::duration<double>(clock::now() - start).count();
    } while (elapsed < opt.min_seconds);
    samples.push_back(elapsed / static_cast<double>(n));
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

int64_t side_for(int64_t tokens) {
  const auto side = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (side * side != tokens) throw Error("bench: token count must be a square, got " + std::to_string(tokens));
  return side;
}

BenchRow time_fdfa(const BenchOptions& opt, int64_t c, int64_t tokens) {
  ParamStore params;
  Rng rng(0xbe4c);
  FdfaConfig cfg;
  cfg.channels = c;
  Fdfa fdfa(params, "bench", cfg, rng);
  const Tensor x = random_input(c, side_for(tokens), rng);
  autograd::NoGradGuard guard;
  BenchRow row;
  row.channels = c;
  row.tokens = tokens;
  row.attention_mults = attention_flops(c, tokens, 1);
  row.seconds = median_seconds(opt, [&] { (void)fdfa.forward(x); });
  return row;
}

BenchRow time_core(const BenchOptions& opt, int64_t c, int64_t tokens) {
  Rng rng(0xc04e);
  Tensor q({1, c, tokens}), k({1, c, tokens}), v({1, c, tokens});
  for (Tensor* t : {&q, &k, &v})
    for (double& e : t->data()) e = rng.normal() * 0.05;
  autograd::NoGradGuard guard;
  BenchRow row;
  row.channels = c;
  row.tokens = tokens;
  row.attention_mults = attention_flops(c, tokens, 1);
  row.seconds = median_seconds(opt, [&] { (void)matmul(softmax(matmul_nt(q, k), -1), v); });
  return row;
}

}  // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double BenchReport::slope(const std::string& sweep) const {
  for (const auto& f : fits)
    if (f.sweep == sweep) return f.slope;
  throw Error("bench: no fit named " + sweep);
}

BenchReport run_bench(const BenchOptions& opt) {
  BenchReport report;
  const auto sweep = [&](const std::string& unit, auto&& timer) {
    std::vector<double> cx, cy, mx, my;
    for (int64_t c : opt.channel_sweep) {
      BenchRow r = timer(c, opt.fixed_tokens);
      r.sweep = unit + "_channels";
      cx.push_back(static_cast<double>(c));
      cy.push_back(r.seconds);
      report.rows.push_back(r);
    }
    for (int64_t m : opt.token_sweep) {
      BenchRow r = timer(opt.fixed_channels, m);
      r.sweep = unit + "_tokens";
      mx.push_back(static_cast<double>(m));
      my.push_back(r.seconds);
      report.rows.push_back(r);
    }
    report.fits.push_back({unit + "_channels", loglog_slope(cx, cy)});
    report.fits.push_back({unit + "_tokens", loglog_slope(mx, my)});
  };
  sweep("fdfa", [&](int64_t c, int64_t m) { return time_fdfa(opt, c, m); });
  if (opt.include_core) sweep("core", [&](int64_t c, int64_t m) { return time_core(opt, c, m); });
  return report;
}

void write_bench_csv(const BenchReport& report, std::ostream& os) {
  os << "kind,sweep,channels,tokens,heads,seconds,attention_mults,slope\n";
  os << std::setprecision(6);
  for (const auto& r : report.rows)
    os << "row," << r.sweep << ',' << r.channels << ',' << r.tokens << ',' << r.heads << ','
       << r.seconds << ',' << r.attention_mults << ",\n";
  for (const auto& f : report.fits) os << "fit," << f.sweep << ",,,,,," << f.slope << '\n';
}

}  // namespace dabformer
