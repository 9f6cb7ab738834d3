// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances and runtime limits are fixed here.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "inhibitor/attention.hpp"
#include "inhibitor/bench.hpp"
#include "inhibitor/circuit.hpp"
#include "inhibitor/quant.hpp"
#include "inhibitor/train.hpp"

using namespace inhibitor;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = v.ok && in_time;
  if (!pass) ++failures;
  std::printf("%s [%d] %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", id, title,
              v.detail.c_str(), secs, limit_s, in_time ? "" : " TIMEOUT");
  std::fflush(stdout);
}

Tensor2D normal(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Tensor2D t(r, c);
  for (double& x : t.data()) x = nd(rng);
  return t;
}

// 1. Random float instances, then every (V column, Z row) integer 4-tuple in
// [-8, 8]: V = [[a, b], [b, a]], Z = [[c, e], [e, c]] places each tuple in the
// full dependency set of every output entry.
Verdict fused_identity() {
  constexpr double kTol = 1e-12;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  double worst_u = 0.0, worst_s = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = size(rng), m = size(rng), d = size(rng);
    const Tensor2D v = normal(m, d, rng);
    const Tensor2D z = abs(normal(n, m, rng));
    worst_u = std::max(worst_u, max_abs_diff(inhibit_fused(v, z), inhibit_naive(v, z)));
    worst_s = std::max(worst_s, max_abs_diff(signed_inhibit_fused(v, z), signed_inhibit_naive(v, z)));
  }
  long mismatches = 0, cases = 0;
  for (int a = -8; a <= 8; ++a)
    for (int b = -8; b <= 8; ++b)
      for (int c = -8; c <= 8; ++c)
        for (int e = -8; e <= 8; ++e) {
          const Tensor2D v{{double(a), double(b)}, {double(b), double(a)}};
          const Tensor2D z{{double(c), double(e)}, {double(e), double(c)}};
          mismatches += !(inhibit_fused(v, z) == inhibit_naive(v, z));
          mismatches += !(signed_inhibit_fused(v, z) == signed_inhibit_naive(v, z));
          cases += 2;
        }
  std::ostringstream os;
  os << "float max error unsigned " << worst_u << ", signed " << worst_s << " (tol " << kTol
     << ", 10000 instances); integer mismatches " << mismatches << "/" << cases;
  return {worst_u <= kTol && worst_s <= kTol && mismatches == 0, os.str()};
}

// 2.
Verdict pbs_multiplication() {
  CircuitGraph c(7);
  const NodeId a = c.input({-11, 11}), b = c.input({-11, 11});
  c.mark_output(pbs_mul(c, a, b));
  Interpreter run(c);
  int exact = 0;
  for (std::int64_t x = -11; x <= 11; ++x)
    for (std::int64_t y = -11; y <= 11; ++y) {
      const std::int64_t in[] = {x, y};
      exact += run.run(in)[0] == x * y;
    }
  return {exact == 529, std::to_string(exact) + "/529 exact"};
}

// 3.
Verdict cost_structure() {
  bool ok = true;
  std::ostringstream os;
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    const CostReport ih = analyze_bits(build_inhibitor_circuit(AttentionConfig::defaults(n, 2), {}));
    const CostReport dp =
        analyze_bits(build_dotprod_circuit(AttentionConfig::defaults(n, 2, Mechanism::DotProd), {}));
    const double pbs_ratio = double(dp.pbs_count) / double(ih.pbs_count);
    const int gap = dp.max_bits - ih.max_bits;
    const double cost_ratio = dp.est_cost / ih.est_cost;
    ok = ok && pbs_ratio >= 2.0 && pbs_ratio <= 2.5 && (gap == 1 || gap == 2) && cost_ratio > 2.0;
    os << (n == 1 ? "" : "; ") << "n=" << n << " pbs " << dp.pbs_count << "/" << ih.pbs_count << "="
       << pbs_ratio << " bits " << dp.max_bits << "-" << ih.max_bits << " cost x" << cost_ratio;
  }
  return {ok, os.str()};
}

// 4. Inputs are Q (4), K (4), V (4), each entry in [-4, 3]. The dependency set
// of H[0][0] is Q row 0, all of K and V column 0: eight entries, enumerated
// exhaustively (8^8 assignments). Q row 1 and V column 1 are bijective images
// of Q row 0 and V column 0, so each of the other three outputs also sees
// every assignment of its own eight inputs.
Verdict circuit_vs_quant() {
  const std::size_t n = 2, d = 2;
  const AttentionConfig cfg = AttentionConfig::defaults(n, d);
  const CircuitOptions opt;
  const CircuitGraph c = build_inhibitor_circuit(cfg, opt);
  const int shift = circuit_gamma_shift(cfg, opt);
  Interpreter run(c);
  QTensor q{n, d, std::vector<std::int32_t>(4), 0, 8};
  QTensor k = q, v = q;
  std::vector<std::int64_t> in(12);
  const auto mirror = [](std::int32_t x) { return -1 - x; };
  long mismatches = 0, cases = 0;
  for (std::uint32_t code = 0; code < (1u << 24); ++code) {
    std::int32_t digit[8];
    for (int t = 0; t < 8; ++t) digit[t] = static_cast<std::int32_t>((code >> (3 * t)) & 7u) - 4;
    q.data = {digit[0], digit[1], mirror(digit[1]), mirror(digit[0])};
    k.data = {digit[2], digit[3], digit[4], digit[5]};
    v.data = {digit[6], mirror(digit[7]), digit[7], mirror(digit[6])};
    for (int t = 0; t < 4; ++t) {
      in[t] = q.data[t];
      in[4 + t] = k.data[t];
      in[8 + t] = v.data[t];
    }
    const QTensor want = q_manhattan_inhibitor(q, k, v, 0, shift);
    const auto got = run.run(in);
    for (int t = 0; t < 4; ++t) mismatches += got[t] != want.data[t];
    ++cases;
  }
  return {mismatches == 0, std::to_string(cases) + " input assignments, " + std::to_string(mismatches) +
                               " mismatching outputs (gamma = 2^" + std::to_string(shift) + ")"};
}

// 5.
Verdict speedup() {
  bool ok = true;
  std::ostringstream os;
  for (std::size_t n : {64u, 128u, 256u, 512u}) {
    const BenchResult dp = bench_kernel(Mechanism::DotProd, n, 64);
    const BenchResult ih = bench_kernel(Mechanism::Inhibitor, n, 64);
    const bool faster = ih.median_ns < dp.median_ns;
    const bool separated = n < 256 || ih.ci95_high_ns < dp.ci95_low_ns;
    ok = ok && faster && separated;
    os << (n == 64 ? "" : "; ") << "n=" << n << " inhibitor/dotprod " << ih.median_ns / dp.median_ns
       << (n >= 256 ? (separated ? " CIs disjoint" : " CIs overlap") : "");
  }
  return {ok, os.str()};
}

// 6.
Verdict gradients() {
  bool ok = true;
  double worst = 0.0;
  std::string worst_name, failed;
  const auto cases = gradcheck::all_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const gradcheck::Outcome r = gradcheck::check(cases[i], 100, 7000 + i);
    if (r.checked < 100 || !(r.worst < 1e-4)) {
      ok = false;
      failed += " " + cases[i].name;
    }
    if (r.worst >= worst) {
      worst = r.worst;
      worst_name = cases[i].name;
    }
  }
  std::ostringstream os;
  os << cases.size() << " rules x 100 points, worst relative error " << worst << " (" << worst_name
     << ", tol 1e-4)" << (failed.empty() ? "" : "; failing:" + failed);
  return {ok, os.str()};
}

// 7. Overlap means the 95% t-intervals of the mean test MSE intersect.
Verdict adding_parity() {
  constexpr double kT4 = 2.7764451051977987;  // t(0.975, 4 dof)
  bool ok = true;
  std::ostringstream os;
  double lo[2], hi[2];
  int idx = 0;
  for (Mechanism m : {Mechanism::Inhibitor, Mechanism::DotProd}) {
    std::vector<double> mse;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      TrainConfig cfg;
      cfg.mechanism = m;
      cfg.seed = seed;
      mse.push_back(train(cfg).final_test_mse);
    }
    double mean = 0.0, var = 0.0;
    for (double x : mse) mean += x / 5.0;
    for (double x : mse) var += (x - mean) * (x - mean) / 4.0;
    const double half = kT4 * std::sqrt(var / 5.0);
    lo[idx] = mean - half;
    hi[idx] = mean + half;
    const double worst = *std::max_element(mse.begin(), mse.end());
    ok = ok && worst < 0.05;
    os << to_string(m) << " mse [";
    for (std::size_t i = 0; i < mse.size(); ++i) os << (i ? " " : "") << mse[i];
    os << "] 95% CI of mean [" << lo[idx] << ", " << hi[idx] << "]; ";
    ++idx;
  }
  const bool overlap = lo[0] <= hi[1] && lo[1] <= hi[0];
  os << (overlap ? "intervals overlap" : "intervals disjoint");
  return {ok && overlap, os.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// 8.
Verdict determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "inhibitor_acceptance";
  fs::create_directories(dir);
  const std::string cli = INHIBITOR_CLI;
  const std::vector<std::string> commands = {
      "train-adding --mechanism inhibitor --seq-len 20 --steps 2000 --seed 11",
      "train-adding --mechanism dotprod --seq-len 20 --steps 2000 --seed 11",
      "cost --mechanism inhibitor --seq-len 1,2,4,8 --dim 2 --bits 3 --precision 7",
      "cost --mechanism dotprod --seq-len 1,2,4,8 --dim 2 --bits 3 --precision 7",
  };
  bool ok = true;
  std::ostringstream os;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::string outs[2];
    for (int r = 0; r < 2; ++r) {
      const fs::path out = dir / ("run" + std::to_string(i) + "_" + std::to_string(r) + ".csv");
      const std::string cmd = cli + " " + commands[i] + " --out " + out.string();
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        ok = false;
        os << "'" << commands[i] << "' exited abnormally; ";
      }
      outs[r] = slurp(out);
    }
    const bool same = !outs[0].empty() && outs[0] == outs[1];
    ok = ok && same;
    os << (i ? "; " : "") << commands[i].substr(0, commands[i].find(" --seq-len")) << " "
       << (same ? "identical" : "DIFFERENT") << " (" << outs[0].size() << " bytes)";
  }
  fs::remove_all(dir);
  return {ok, os.str()};
}

}  // namespace

int main() {
  report(1, "fused inhibition identity", 10, fused_identity);
  report(2, "PBS multiplication", 1, pbs_multiplication);
  report(3, "encrypted cost structure", 5, cost_structure);
  report(4, "inhibitor circuit vs integer kernel", 60, circuit_vs_quant);
  report(5, "plaintext speedup direction", 300, speedup);
  report(6, "gradient checks", 30, gradients);
  report(7, "adding-problem parity", 900, adding_parity);
  report(8, "determinism of train-adding and cost", 600, determinism);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
