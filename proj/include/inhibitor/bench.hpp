#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inhibitor/attention.hpp"
#include "inhibitor/quant.hpp"

namespace inhibitor {

struct BenchResult {
  Mechanism mechanism = Mechanism::Inhibitor;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t reps = 0;
  double median_ns = 0.0;
  double ci95_low_ns = 0.0;
  double ci95_high_ns = 0.0;
};

struct BenchOptions {
  std::size_t reps = 20;
  std::size_t warmup = 3;
  std::uint64_t seed = 0;
  int bits = 16;
  int scale_exp = -12;  // inputs are standard normal, so +-8 fits 16 bits
  std::size_t bootstrap_samples = 2000;
};

// Q, K, V operands for one benchmark size; identical for identical seeds.
struct BenchInputs {
  QTensor q, k, v;
};
BenchInputs bench_inputs(std::size_t n, std::size_t d, const BenchOptions& opt);

// Runs the quant-module kernel once; this is the timed body.
QTensor run_kernel(Mechanism m, const BenchInputs& in);

/// Times `reps` runs of the integer kernel after `warmup` untimed runs.
/// Inputs are generated before timing starts. Throws ConfigError if reps < 20
/// or n, d are zero.
BenchResult bench_kernel(Mechanism m, std::size_t n, std::size_t d, const BenchOptions& opt = {});

double median(std::vector<double> xs);

// Percentile bootstrap 95% interval of the median, deterministic in `seed`.
std::pair<double, double> bootstrap_median_ci(std::span<const double> samples, std::size_t resamples,
                                              std::uint64_t seed);

inline constexpr const char* kBenchHeader = "mechanism,n,d,reps,median_ns,ci_low,ci_high";

void emit_table(std::ostream& os, std::span<const BenchResult> results);
// Parses what emit_table writes; lines starting with '#' are skipped.
// Throws ConfigError on a malformed header or row.
std::vector<BenchResult> parse_table(std::istream& is);

}  // namespace inhibitor
