// inhibitor: verification, benchmarks, circuit cost tables and adding-problem
// training from one binary. Exit codes: 0 success, 1 verification failure,
// 2 usage error, 3 overflow or precision error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "inhibitor/bench.hpp"
#include "inhibitor/circuit.hpp"
#include "inhibitor/errors.hpp"
#include "inhibitor/train.hpp"
#include "inhibitor/verify.hpp"

namespace {

using namespace inhibitor;

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kOverflow = 3 };

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

// "-" writes to stdout.
void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file '" + path + "'");
  f << text;
}

// Drops the last key from the |V - Z| sum: used by the verify mutation check.
Tensor2D faulty_fused(const Tensor2D& v, const Tensor2D& z) {
  if (v.rows() < 2) return inhibit_fused(v, z);
  Tensor2D h = inhibit_fused(slice_rows(v, 0, v.rows() - 1), slice_cols(z, 0, z.cols() - 1));
  const Tensor2D last = inhibit_fused(slice_rows(v, v.rows() - 1, v.rows()), slice_cols(z, z.cols() - 1, z.cols()));
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t k = 0; k < h.cols(); ++k) h(i, k) += 0.5 * last(i, k);
  return h;
}

struct VerifyFlags {
  std::string filter;
  std::uint64_t seed = 0;
  std::size_t cases = 1000;
  std::string fault;
};

int run_verify_cmd(const VerifyFlags& f) {
  VerifyOptions opt;
  opt.filter = f.filter;
  opt.seed = f.seed;
  opt.random_cases = f.cases;
  if (f.fault == "fused-inhibit") opt.fused = faulty_fused;
  if (f.fault == "signed-inhibit") {
    opt.signed_fused = [](const Tensor2D& v, const Tensor2D& z) {
      return signed_inhibit_fused(relu(v), z);
    };
  }
  std::cout << "# inhibitor verify --filter=" << f.filter << " --cases=" << f.cases
            << " --seed=" << f.seed << '\n';
  const auto results = run_verify(opt);
  if (results.empty()) throw ConfigError("verify: no suite matches filter '" + f.filter + "'");
  bool ok = true;
  for (const auto& r : results) {
    if (r.passed) {
      std::cout << "PASS " << r.name << " (" << r.cases << " cases)\n";
    } else {
      std::cout << "FAIL " << r.name << ": " << r.failure << '\n';
      ok = false;
    }
  }
  return ok ? kOk : kFailed;
}

struct BenchFlags {
  std::string mechanism;
  std::vector<std::size_t> seq_len{64, 128, 256, 512};
  std::size_t dim = 64;
  std::size_t reps = 20;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int run_bench_cmd(const BenchFlags& f) {
  const Mechanism m = parse_mechanism(f.mechanism);
  BenchOptions opt;
  opt.reps = f.reps;
  opt.seed = f.seed;
  std::vector<BenchResult> rows;
  for (std::size_t n : f.seq_len) rows.push_back(bench_kernel(m, n, f.dim, opt));
  std::ostringstream os;
  os << "# inhibitor bench --mechanism=" << f.mechanism << " --seq-len=" << join(f.seq_len)
     << " --dim=" << f.dim << " --reps=" << f.reps << " --seed=" << f.seed << " bits=" << opt.bits
     << '\n';
  emit_table(os, rows);
  write_output(f.out, os.str());
  return kOk;
}

struct CostFlags {
  std::string mechanism;
  std::vector<std::size_t> seq_len{1, 2, 4, 8};
  std::size_t dim = 2;
  int bits = 3;
  int precision = 7;
  std::int64_t alpha_q = 0;
  std::string out = "-";
};

int run_cost_cmd(const CostFlags& f) {
  const Mechanism m = parse_mechanism(f.mechanism);
  CircuitOptions opt;
  opt.bits = f.bits;
  opt.max_precision = f.precision;
  opt.alpha_q = f.alpha_q;
  std::ostringstream os;
  os << "# inhibitor cost --mechanism=" << f.mechanism << " --seq-len=" << join(f.seq_len)
     << " --dim=" << f.dim << " --bits=" << f.bits << " --precision=" << f.precision
     << " --alpha-q=" << f.alpha_q << " --seed=none\n";
  os << "mechanism,n,d,bits,pbs,adds,mul_const,max_bits,est_cost\n";
  std::string notes;
  for (std::size_t n : f.seq_len) {
    const AttentionConfig cfg = AttentionConfig::defaults(n, f.dim, m);
    const CircuitGraph c = m == Mechanism::Inhibitor ? build_inhibitor_circuit(cfg, opt)
                                                     : build_dotprod_circuit(cfg, opt);
    const CostReport r = analyze_bits(c);
    os << f.mechanism << ',' << n << ',' << f.dim << ',' << f.bits << ',' << r.pbs_count << ','
       << r.add_count << ',' << r.mul_const_count << ',' << r.max_bits << ',' << r.est_cost
       << '\n';
    notes = r.metadata;
  }
  if (!notes.empty()) os << "# " << notes << '\n';
  write_output(f.out, os.str());
  return kOk;
}

struct TrainFlags {
  std::string mechanism;
  TrainConfig cfg;
  std::string out = "-";
};

int run_train_cmd(TrainFlags f) {
  f.cfg.mechanism = parse_mechanism(f.mechanism);
  const TrainReport report = train(f.cfg);
  const TrainConfig& c = f.cfg;
  std::ostringstream os;
  os << "# inhibitor train-adding --mechanism=" << f.mechanism << " --seq-len=" << c.seq_len
     << " --steps=" << c.steps << " --batch=" << c.batch << " --lr=" << c.learning_rate
     << " --dim=" << c.model_dim << " --hidden=" << c.hidden_dim << " --shift=" << c.score_shift
     << " --signed=" << (c.signed_values ? "true" : "false") << " --test-size=" << c.test_size
     << " --log-every=" << c.log_every << " --seed=" << c.seed << '\n';
  os.precision(10);
  os << "# test_target_variance=" << report.test_target_variance << '\n';
  write_train_csv(os, report);
  write_output(f.out, os.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inhibitor and dot-product attention: verification, benchmarks, circuit costs, training"};
  app.require_subcommand(1);

  VerifyFlags vf;
  auto* verify = app.add_subcommand("verify", "Run the oracle equivalence suites");
  verify->add_option("--filter", vf.filter, "Only run suites whose name contains this string");
  verify->add_option("--seed", vf.seed, "Seed for randomized cases")->capture_default_str();
  verify->add_option("--cases", vf.cases, "Random cases per suite")->capture_default_str()
      ->check(CLI::PositiveNumber);
  verify->add_option("--inject-fault", vf.fault)
      ->check(CLI::IsMember({"fused-inhibit", "signed-inhibit"}))
      ->group("");

  const std::vector<std::string> mechanisms{"dotprod", "inhibitor"};

  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "Time the integer attention kernels");
  bench->add_option("--mechanism", bf.mechanism)->required()->check(CLI::IsMember(mechanisms));
  bench->add_option("--seq-len", bf.seq_len, "Comma-separated sequence lengths")
      ->delimiter(',')->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--dim", bf.dim)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--reps", bf.reps)->capture_default_str()->check(CLI::Range(20, 1000000));
  bench->add_option("--seed", bf.seed)->capture_default_str();
  bench->add_option("--out", bf.out, "Output CSV path, - for stdout")->capture_default_str();

  CostFlags cf;
  auto* cost = app.add_subcommand("cost", "Build attention circuits and report PBS cost");
  cost->add_option("--mechanism", cf.mechanism)->required()->check(CLI::IsMember(mechanisms));
  cost->add_option("--seq-len", cf.seq_len)->delimiter(',')->capture_default_str()
      ->check(CLI::PositiveNumber);
  cost->add_option("--dim", cf.dim)->capture_default_str()->check(CLI::PositiveNumber);
  cost->add_option("--bits", cf.bits, "Operand bit width")->capture_default_str()
      ->check(CLI::Range(1, 16));
  cost->add_option("--precision", cf.precision, "Widest lookup input in bits")
      ->capture_default_str()->check(CLI::Range(1, 16));
  cost->add_option("--alpha-q", cf.alpha_q, "Score shift in operand units (0 disables)")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  cost->add_option("--out", cf.out)->capture_default_str();

  TrainFlags tf;
  auto* tr = app.add_subcommand("train-adding", "Train one attention block on the adding problem");
  tr->add_option("--mechanism", tf.mechanism)->required()->check(CLI::IsMember(mechanisms));
  tr->add_option("--seq-len", tf.cfg.seq_len)->capture_default_str()->check(CLI::Range(2, 100000));
  tr->add_option("--steps", tf.cfg.steps)->capture_default_str();
  tr->add_option("--seed", tf.cfg.seed)->capture_default_str();
  tr->add_option("--batch", tf.cfg.batch)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--lr", tf.cfg.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--dim", tf.cfg.model_dim)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--hidden", tf.cfg.hidden_dim)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--shift", tf.cfg.score_shift, "Inhibitor score shift alpha")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  tr->add_flag("--signed", tf.cfg.signed_values, "Signed inhibition");
  tr->add_option("--test-size", tf.cfg.test_size)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--log-every", tf.cfg.log_every)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--out", tf.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*verify) return run_verify_cmd(vf);
    if (*bench) return run_bench_cmd(bf);
    if (*cost) return run_cost_cmd(cf);
    return run_train_cmd(tf);
  } catch (const OverflowError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOverflow;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
}
