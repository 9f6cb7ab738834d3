#include "inhibitor/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

#include "inhibitor/errors.hpp"

namespace inhibitor {

namespace {

QTensor normal_operand(std::size_t n, std::size_t d, const BenchOptions& opt, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor2D t(n, d);
  for (double& x : t.data()) x = dist(rng);
  return quantize(t, opt.bits, opt.scale_exp);
}

// Keeps the optimizer from discarding a kernel result.
volatile std::int32_t g_sink = 0;

}  // namespace

BenchInputs bench_inputs(std::size_t n, std::size_t d, const BenchOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ (static_cast<std::uint64_t>(n) << 32) ^ d);
  BenchInputs in;
  in.q = normal_operand(n, d, opt, rng);
  in.k = normal_operand(n, d, opt, rng);
  in.v = normal_operand(n, d, opt, rng);
  return in;
}

QTensor run_kernel(Mechanism m, const BenchInputs& in) {
  if (m == Mechanism::DotProd) return q_dotprod_attention(in.q, in.k, in.v);
  // gamma = 2^round(log2 sqrt(d)), alpha = 0.5
  const int gamma_shift =
      static_cast<int>(std::lround(0.5 * std::log2(static_cast<double>(in.q.cols))));
  const std::int64_t alpha_q = std::int64_t{1} << (-in.q.scale_exp - 1);
  return q_manhattan_inhibitor(in.q, in.k, in.v, alpha_q, gamma_shift);
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw ConfigError("median of an empty sample");
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
  const double hi = xs[mid];
  if (xs.size() % 2 == 1) return hi;
  const double lo = *std::max_element(xs.begin(), xs.begin() + mid);
  return 0.5 * (lo + hi);
}

std::pair<double, double> bootstrap_median_ci(std::span<const double> samples,
                                              std::size_t resamples, std::uint64_t seed) {
  if (samples.empty() || resamples == 0) throw ConfigError("bootstrap: empty sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<double> medians(resamples);
  std::vector<double> draw(samples.size());
  for (double& m : medians) {
    for (double& x : draw) x = samples[pick(rng)];
    m = median(draw);
  }
  std::sort(medians.begin(), medians.end());
  const auto at = [&](double q) {
    const auto i = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
    return medians[i];
  };
  return {at(0.025), at(0.975)};
}

BenchResult bench_kernel(Mechanism m, std::size_t n, std::size_t d, const BenchOptions& opt) {
  if (opt.reps < 20) throw ConfigError("bench: reps must be >= 20");
  if (n == 0 || d == 0) throw ConfigError("bench: n and d must be positive");
  const BenchInputs in = bench_inputs(n, d, opt);

  for (std::size_t i = 0; i < opt.warmup; ++i) g_sink = run_kernel(m, in).data[0];

  std::vector<double> times;
  times.reserve(opt.reps);
  for (std::size_t i = 0; i < opt.reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const QTensor out = run_kernel(m, in);
    const auto t1 = std::chrono::steady_clock::now();
    g_sink = out.data[0];
    times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }

  BenchResult r;
  r.mechanism = m;
  r.n = n;
  r.d = d;
  r.reps = opt.reps;
  r.median_ns = median(times);
  std::tie(r.ci95_low_ns, r.ci95_high_ns) =
      bootstrap_median_ci(times, opt.bootstrap_samples, opt.seed + 1);
  // The percentile interval of a median of an even-sized sample can miss the
  // sample median by half a gap.
  r.ci95_low_ns = std::min(r.ci95_low_ns, r.median_ns);
  r.ci95_high_ns = std::max(r.ci95_high_ns, r.median_ns);
  return r;
}

void emit_table(std::ostream& os, std::span<const BenchResult> results) {
  os << kBenchHeader << '\n';
  const auto old = os.precision(12);
  for (const auto& r : results) {
    os << to_string(r.mechanism) << ',' << r.n << ',' << r.d << ',' << r.reps << ','
       << r.median_ns << ',' << r.ci95_low_ns << ',' << r.ci95_high_ns << '\n';
  }
  os.precision(old);
}

std::vector<BenchResult> parse_table(std::istream& is) {
  std::string line;
  bool header = false;
  std::vector<BenchResult> out;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kBenchHeader) throw ConfigError("bench table: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw ConfigError("bench table: expected 7 fields in '" + line + "'");
    try {
      BenchResult r;
      r.mechanism = parse_mechanism(f[0]);
      r.n = std::stoul(f[1]);
      r.d = std::stoul(f[2]);
      r.reps = std::stoul(f[3]);
      r.median_ns = std::stod(f[4]);
      r.ci95_low_ns = std::stod(f[5]);
      r.ci95_high_ns = std::stod(f[6]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw ConfigError("bench table: malformed row '" + line + "'");
    }
  }
  if (!header) throw ConfigError("bench table: missing header");
  return out;
}

}  // namespace inhibitor
