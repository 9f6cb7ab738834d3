#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "inhibitor/bench.hpp"
#include "inhibitor/errors.hpp"

using namespace inhibitor;

TEST(Median, OddEvenAndErrors) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(median({}), ConfigError);
}

TEST(Bootstrap, IntervalBracketsMedianAndIsDeterministic) {
  std::mt19937_64 rng(1);
  std::lognormal_distribution<double> dist(10.0, 0.3);
  std::vector<double> xs(40);
  for (double& x : xs) x = dist(rng);
  const auto a = bootstrap_median_ci(xs, 2000, 5);
  const auto b = bootstrap_median_ci(xs, 2000, 5);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.first, median(xs));
  EXPECT_GE(a.second, median(xs));
  EXPECT_LT(a.first, a.second);
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  EXPECT_GE(a.first, *lo);
  EXPECT_LE(a.second, *hi);
}

TEST(Bootstrap, ConstantSampleHasZeroWidth) {
  const std::vector<double> xs(25, 7.0);
  EXPECT_EQ(bootstrap_median_ci(xs, 500, 0), std::make_pair(7.0, 7.0));
}

TEST(BenchInputs, SameSeedSameOperands) {
  BenchOptions opt;
  opt.seed = 42;
  const BenchInputs a = bench_inputs(16, 8, opt), b = bench_inputs(16, 8, opt);
  EXPECT_EQ(a.q.data, b.q.data);
  EXPECT_EQ(a.k.data, b.k.data);
  EXPECT_EQ(a.v.data, b.v.data);
  opt.seed = 43;
  EXPECT_NE(bench_inputs(16, 8, opt).q.data, a.q.data);
  EXPECT_EQ(a.q.bits, 16);
}

TEST(BenchKernel, TimedKernelsAreTheQuantKernels) {
  const BenchInputs in = bench_inputs(8, 16, {});
  EXPECT_EQ(run_kernel(Mechanism::DotProd, in).data, q_dotprod_attention(in.q, in.k, in.v).data);
  // gamma = 2^round(log2 sqrt 16) = 4, alpha = 0.5 at scale 2^-12
  EXPECT_EQ(run_kernel(Mechanism::Inhibitor, in).data,
            q_manhattan_inhibitor(in.q, in.k, in.v, 2048, 2).data);
}

TEST(BenchKernel, TinyRunReportsPositiveDurations) {
  for (Mechanism m : {Mechanism::DotProd, Mechanism::Inhibitor}) {
    const BenchResult r = bench_kernel(m, 1, 64);
    EXPECT_EQ(r.mechanism, m);
    EXPECT_EQ(r.reps, 20u);
    EXPECT_GT(r.median_ns, 0.0);
    EXPECT_LE(r.ci95_low_ns, r.median_ns);
    EXPECT_GE(r.ci95_high_ns, r.median_ns);
  }
}

TEST(BenchKernel, RejectsTooFewReps) {
  BenchOptions opt;
  opt.reps = 19;
  EXPECT_THROW(bench_kernel(Mechanism::Inhibitor, 4, 4, opt), ConfigError);
  EXPECT_THROW(bench_kernel(Mechanism::Inhibitor, 0, 4), ConfigError);
}

TEST(EmitTable, HeaderRowsAndRoundTrip) {
  const std::vector<BenchResult> rows = {
      {Mechanism::DotProd, 64, 64, 20, 443670.5, 431481.25, 468168},
      {Mechanism::Inhibitor, 512, 64, 25, 11963052, 8916018.5, 12259451.5},
  };
  std::ostringstream os;
  emit_table(os, rows);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "mechanism,n,d,reps,median_ns,ci_low,ci_high");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);

  std::istringstream is("# comment\n" + text);
  const auto back = parse_table(is);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].mechanism, rows[i].mechanism);
    EXPECT_EQ(back[i].n, rows[i].n);
    EXPECT_EQ(back[i].d, rows[i].d);
    EXPECT_EQ(back[i].reps, rows[i].reps);
    EXPECT_EQ(back[i].median_ns, rows[i].median_ns);
    EXPECT_EQ(back[i].ci95_low_ns, rows[i].ci95_low_ns);
    EXPECT_EQ(back[i].ci95_high_ns, rows[i].ci95_high_ns);
  }
}

TEST(ParseTable, RejectsMalformedInput) {
  std::istringstream bad_header("mechanism,n\n");
  EXPECT_THROW(parse_table(bad_header), ConfigError);
  std::istringstream short_row(std::string(kBenchHeader) + "\ninhibitor,1,2\n");
  EXPECT_THROW(parse_table(short_row), ConfigError);
  std::istringstream bad_mech(std::string(kBenchHeader) + "\nlinear,1,2,20,1,1,1\n");
  EXPECT_THROW(parse_table(bad_mech), ConfigError);
  std::istringstream empty("");
  EXPECT_THROW(parse_table(empty), ConfigError);
}
