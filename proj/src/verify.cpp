#include "inhibitor/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "inhibitor/attention.hpp"
#include "inhibitor/circuit.hpp"
#include "inhibitor/errors.hpp"
#include "inhibitor/quant.hpp"

namespace inhibitor {

namespace {

constexpr double kFloatTol = 1e-12;

struct Check {
  SuiteResult& r;

  // Records a case; keeps the first failure message.
  bool operator()(bool ok, const std::string& what) {
    ++r.cases;
    if (!ok && r.passed) {
      r.passed = false;
      r.failure = what;
    }
    return ok;
  }
};

Tensor2D normal(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  Tensor2D t(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

std::string describe(const char* what, std::size_t n, std::size_t d, double err) {
  std::ostringstream os;
  os << what << " n=" << n << " d=" << d << " max error " << err;
  return os.str();
}

// Random float instances plus every integer (V column, Z row) pair in
// [-8, 8]^2 x [-8, 8]^2. V = [[a, b], [b, a]] and Z = [[c, e], [e, c]] put
// every 4-tuple into the dependency set of every output entry.
void fused_suite(SuiteResult& r, const VerifyOptions& opt, const InhibitKernel& fused,
                 const InhibitKernel& naive) {
  Check check{r};
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (std::size_t t = 0; t < opt.random_cases; ++t) {
    const std::size_t n = size(rng), m = size(rng), d = size(rng);
    const Tensor2D v = normal(m, d, 1.0, rng);
    const Tensor2D z = abs(normal(n, m, 1.0, rng));
    const double err = max_abs_diff(fused(v, z), naive(v, z));
    if (!check(err <= kFloatTol, describe("random float", m, d, err))) return;
  }
  for (int a = -8; a <= 8; ++a)
    for (int b = -8; b <= 8; ++b)
      for (int c = -8; c <= 8; ++c)
        for (int e = -8; e <= 8; ++e) {
          const Tensor2D v{{double(a), double(b)}, {double(b), double(a)}};
          const Tensor2D z{{double(c), double(e)}, {double(e), double(c)}};
          if (!check(fused(v, z) == naive(v, z),
                     "integer V=[[" + std::to_string(a) + "," + std::to_string(b) + "],...] Z=[[" +
                         std::to_string(c) + "," + std::to_string(e) + "],...]")) {
            return;
          }
        }
}

void pbs_suite(SuiteResult& r) {
  Check check{r};
  CircuitGraph c(7);
  const NodeId a = c.input({-11, 11}, "a");
  const NodeId b = c.input({-11, 11}, "b");
  c.mark_output(pbs_mul(c, a, b));
  Interpreter run(c);
  for (std::int64_t x = -11; x <= 11; ++x)
    for (std::int64_t y = -11; y <= 11; ++y) {
      const std::int64_t in[] = {x, y};
      const std::int64_t got = run.run(in)[0];
      if (!check(got == x * y, "pbs_mul(" + std::to_string(x) + ", " + std::to_string(y) +
                                   ") = " + std::to_string(got))) {
        return;
      }
    }
  check(analyze_bits(c).pbs_count == 2, "pbs_mul must use exactly two lookups");
}

// The inhibitor kernel is exact on quantized inputs: dequantizing its output
// must reproduce the float kernel on the dequantized operands. The softmax
// kernel is checked against an error budget of one rounding step of V plus
// max|V| times the weight error: table interpolation (< 2^-12), the cut-off
// beyond score -8 (exp(-8) per key) and Q15 renormalization (2^-15 per key).
void quant_suite(SuiteResult& r, const VerifyOptions& opt) {
  Check check{r};
  std::mt19937_64 rng(opt.seed + 1);
  std::uniform_int_distribution<std::size_t> size(1, 16);
  const std::size_t cases = std::max<std::size_t>(1, opt.random_cases / 10);
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t n = size(rng), d = size(rng);
    const int e = -8;
    const QTensor q = quantize(normal(n, d, 1.0, rng), 16, e);
    const QTensor k = quantize(normal(n, d, 1.0, rng), 16, e);
    const QTensor v = quantize(normal(n, d, 1.0, rng), 16, e);
    const Tensor2D qf = dequantize(q), kf = dequantize(k), vf = dequantize(v);

    const int shift = static_cast<int>(std::lround(0.5 * std::log2(static_cast<double>(d))));
    const std::int64_t alpha_q = std::int64_t{1} << (-e - 1);
    AttentionConfig cfg = AttentionConfig::defaults(n, d);
    cfg.score_scale = std::ldexp(1.0, shift);
    const double ih_err =
        max_abs_diff(dequantize(q_manhattan_inhibitor(q, k, v, alpha_q, shift)),
                     inhibitor_attention(qf, kf, vf, cfg));
    if (!check(ih_err <= kFloatTol, describe("q_manhattan_inhibitor vs float", n, d, ih_err))) return;

    const double budget =
        std::ldexp(1.0, e) +
        max_abs(vf) * (std::ldexp(1.0, -12) + static_cast<double>(n) * (std::exp(-8.0) + std::ldexp(1.0, -15)));
    const double dp_err =
        max_abs_diff(dequantize(q_dotprod_attention(q, k, v)), dotprod_attention(qf, kf, vf, d));
    if (!check(dp_err <= budget, describe("q_dotprod_attention vs float", n, d, dp_err))) return;
  }
}

// Random DAGs over small intervals: every value seen by the interpreter must
// lie in its analyzed interval (the interpreter throws otherwise).
void interval_suite(SuiteResult& r, const VerifyOptions& opt) {
  Check check{r};
  std::mt19937_64 rng(opt.seed + 2);
  const std::function<std::int64_t(std::int64_t)> fns[] = {
      [](std::int64_t x) { return x < 0 ? -x : x; },
      [](std::int64_t x) { return x > 0 ? x : std::int64_t{0}; },
      [](std::int64_t x) { return quarter_square(x); },
      [](std::int64_t x) { return 3 - 2 * x; },
  };
  const char* fn_names[] = {"abs", "relu", "sq/4", "3-2x"};
  const std::size_t graphs = std::max<std::size_t>(1, opt.random_cases / 10);
  for (std::size_t g = 0; g < graphs; ++g) {
    CircuitGraph c(8);
    std::uniform_int_distribution<int> lo_dist(-8, 0), width(0, 8), op(0, 5);
    const int n_inputs = 2 + static_cast<int>(rng() % 3);
    std::vector<Interval> ranges;
    for (int i = 0; i < n_inputs; ++i) {
      const int lo = lo_dist(rng);
      ranges.push_back({lo, lo + width(rng)});
      c.input(ranges.back());
    }
    for (int step = 0; step < 24; ++step) {
      std::uniform_int_distribution<NodeId> pick(0, c.nodes().size() - 1);
      const NodeId a = pick(rng), b = pick(rng);
      switch (op(rng)) {
        case 0: c.add(a, b); break;
        case 1: c.sub(a, b); break;
        case 2: c.neg(a); break;
        case 3: c.mul_const(a, static_cast<std::int64_t>(rng() % 7) - 3); break;
        default: {
          if (c.nodes()[a].range.bits() > c.max_precision()) break;
          const std::size_t f = rng() % 4;
          c.lut(a, fn_names[f], fns[f]);
        }
      }
    }
    for (NodeId id = 0; id < c.nodes().size(); ++id) c.mark_output(id);
    Interpreter run(c);
    std::vector<std::int64_t> in(ranges.size());
    for (int s = 0; s < 50; ++s) {
      for (std::size_t i = 0; i < ranges.size(); ++i) {
        in[i] = std::uniform_int_distribution<std::int64_t>(ranges[i].lo, ranges[i].hi)(rng);
      }
      try {
        run.run(in);
        check(true, "");
      } catch (const OverflowError& ex) {
        check(false, std::string("random graph ") + std::to_string(g) + ": " + ex.what());
        return;
      }
    }
  }
}

// Inhibitor circuit against the integer kernel on random 3-bit operands.
void circuit_suite(SuiteResult& r, const VerifyOptions& opt) {
  Check check{r};
  std::mt19937_64 rng(opt.seed + 3);
  std::uniform_int_distribution<std::int64_t> val(-4, 3);
  for (std::size_t n : {1u, 2u, 3u})
    for (std::size_t d : {1u, 2u, 4u}) {
      const AttentionConfig cfg = AttentionConfig::defaults(n, d);
      CircuitOptions copt;
      const int shift = circuit_gamma_shift(cfg, copt);
      const CircuitGraph c = build_inhibitor_circuit(cfg, copt);
      Interpreter run(c);
      std::vector<std::int64_t> in(3 * n * d);
      for (int s = 0; s < 100; ++s) {
        for (auto& x : in) x = val(rng);
        QTensor ops[3];
        for (int m = 0; m < 3; ++m) {
          ops[m] = QTensor{n, d, std::vector<std::int32_t>(n * d), 0, 8};
          for (std::size_t t = 0; t < n * d; ++t) ops[m].data[t] = static_cast<std::int32_t>(in[m * n * d + t]);
        }
        const QTensor want = q_manhattan_inhibitor(ops[0], ops[1], ops[2], 0, shift);
        const auto got = run.run(in);
        bool same = true;
        for (std::size_t t = 0; t < n * d; ++t) same = same && got[t] == want.data[t];
        if (!check(same, describe("inhibitor circuit vs q_manhattan_inhibitor", n, d, 0.0))) return;
      }
    }
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"fused-inhibit", "signed-inhibit", "pbs-mul", "quant-bounds", "interval-fuzz",
          "circuit-inhibitor"};
}

std::vector<SuiteResult> run_verify(const VerifyOptions& opt) {
  const InhibitKernel fused = opt.fused ? opt.fused : InhibitKernel(inhibit_fused);
  const InhibitKernel signed_fused =
      opt.signed_fused ? opt.signed_fused : InhibitKernel(signed_inhibit_fused);
  std::vector<SuiteResult> out;
  for (const auto& name : suite_names()) {
    if (name.find(opt.filter) == std::string::npos) continue;
    SuiteResult r;
    r.name = name;
    if (name == "fused-inhibit") {
      fused_suite(r, opt, fused, inhibit_naive);
    } else if (name == "signed-inhibit") {
      fused_suite(r, opt, signed_fused, signed_inhibit_naive);
    } else if (name == "pbs-mul") {
      pbs_suite(r);
    } else if (name == "quant-bounds") {
      quant_suite(r, opt);
    } else if (name == "interval-fuzz") {
      interval_suite(r, opt);
    } else {
      circuit_suite(r, opt);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace inhibitor
