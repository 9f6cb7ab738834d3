#pragma once

// TFHE-style integer circuits: additions and literal multiplications are
// free-standing linear ops, every non-linear univariate function is a table
// lookup (one programmable bootstrap), and ciphertext products are built
// from two lookups.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inhibitor/attention.hpp"

namespace inhibitor {

using NodeId = std::size_t;

struct Interval {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  bool contains(std::int64_t x) const { return x >= lo && x <= hi; }
  // Signed bits needed to hold every value in [lo, hi].
  int bits() const;

  friend bool operator==(const Interval&, const Interval&) = default;
};

// Table over the signed p-bit domain [-2^(p-1), 2^(p-1) - 1].
struct LookupTable {
  std::string name;
  int precision = 0;
  std::int64_t lo = 0;
  std::vector<std::int64_t> values;  // 2^precision entries

  Interval domain() const {
    return {lo, lo + static_cast<std::int64_t>(values.size()) - 1};
  }
};

// values[x - lo]; throws OverflowError when x is outside the table's domain
// (in TFHE the ciphertext would silently decrypt to garbage).
std::int64_t lut_apply(std::int64_t x, const LookupTable& table);

enum class OpKind { Input, Const, Add, Sub, Neg, MulConst, Lut };

struct Node {
  OpKind kind = OpKind::Input;
  NodeId a = 0;
  NodeId b = 0;
  std::int64_t literal = 0;  // Const value or MulConst factor
  std::size_t table = 0;     // index into CircuitGraph::tables() for Lut
  Interval range;            // analyzed value interval
  std::string label;
};

/// Topologically ordered DAG. Nodes can only reference earlier nodes, and
/// each node's interval is inferred when it is appended. lut() refuses
/// inputs wider than max_precision bits.
class CircuitGraph {
 public:
  explicit CircuitGraph(int max_precision = 7);

  NodeId input(Interval range, std::string label = {});
  NodeId constant(std::int64_t value);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId mul_const(NodeId a, std::int64_t literal);
  // Tables are shared between lookups with the same name and precision.
  NodeId lut(NodeId a, const std::string& name, const std::function<std::int64_t(std::int64_t)>& f,
             std::string label = {});

  void mark_output(NodeId id) { outputs_.push_back(at(id, "output")); }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<NodeId>& inputs() const { return inputs_; }
  const std::vector<NodeId>& outputs() const { return outputs_; }
  const std::vector<LookupTable>& tables() const { return tables_; }
  int max_precision() const { return max_precision_; }

  // Free-form notes carried into cost reports.
  std::string metadata;

 private:
  NodeId at(NodeId id, const char* op) const;
  NodeId push(Node n);

  int max_precision_;
  std::vector<Node> nodes_;
  std::vector<NodeId> inputs_;
  std::vector<NodeId> outputs_;
  std::vector<LookupTable> tables_;
  std::map<std::pair<std::string, int>, std::size_t> table_index_;
};

// Interval of node `n` given the already-analyzed intervals of earlier nodes.
Interval infer_interval(const Node& n, std::span<const Node> nodes,
                        std::span<const LookupTable> tables);

// floor(x^2 / 4)
std::int64_t quarter_square(std::int64_t x);

// a * b = floor((a+b)^2/4) - floor((a-b)^2/4); exact because (a+b)^2 and
// (a-b)^2 have the same parity. Two lookups.
NodeId pbs_mul(CircuitGraph& c, NodeId a, NodeId b);

struct CostWeights {
  double pbs_base = 2.0;  // w_pbs(p) = pbs_base^p
  double add = 1.0;
};

struct CostReport {
  std::string mechanism;
  std::size_t n = 0;
  std::size_t d = 0;
  int bits = 0;
  std::size_t pbs_count = 0;
  std::size_t add_count = 0;  // Add, Sub and Neg nodes
  std::size_t mul_const_count = 0;
  int max_bits = 0;
  double est_cost = 0.0;
  std::string metadata;
};

/// Re-runs forward interval propagation over the whole graph and tallies
/// operations. max_bits is taken over every encrypted node (constants are
/// cleartext and excluded).
CostReport analyze_bits(const CircuitGraph& c, const CostWeights& weights = {});

struct CircuitOptions {
  int bits = 3;            // operand precision; inputs span the signed range
  int max_precision = 7;   // widest allowed lookup input
  std::int64_t alpha_q = 0;  // shift in input units; > 0 adds n^2 lookups
  int gamma_shift = -1;    // < 0: round(log2(cfg.score_scale))
};

// Resolved gamma shift for a config/options pair.
int circuit_gamma_shift(const AttentionConfig& cfg, const CircuitOptions& opt);

/// Inputs: Q, K, V (each n x d, row-major, in that order). Outputs: H (n x d)
/// with scale 2^-gamma_shift relative to the inputs, matching
/// q_manhattan_inhibitor. Lookups: one abs per (i, j, k) and one relu per
/// (i, j, k), i.e. 2 n^2 d, plus n^2 when alpha_q > 0.
CircuitGraph build_inhibitor_circuit(const AttentionConfig& cfg, const CircuitOptions& opt);

/// Inputs as above. Outputs: softmax numerators (n x d) followed by the n
/// denominators; the division is left to the decrypting client. Lookups:
/// 2 n^2 d for Q K^T, n^2 exponentials, 2 n^2 d for the weighted sum.
CircuitGraph build_dotprod_circuit(const AttentionConfig& cfg, const CircuitOptions& opt);

// Exponential table used by the dot-product circuit: maps an integer score s
// in [s_lo, s_hi] to round(w_max * exp((s - s_hi) * score_scale)).
std::int64_t circuit_exp_weight(std::int64_t s, std::int64_t s_hi, double score_scale,
                                std::int64_t w_max);

/// Noise-free evaluation. Reuses its value buffer between runs; checks that
/// every node's value lies inside its analyzed interval and throws
/// OverflowError naming the node otherwise.
class Interpreter {
 public:
  explicit Interpreter(const CircuitGraph& c) : c_(&c), values_(c.nodes().size()) {}

  // inputs in CircuitGraph::inputs() order; returns values of outputs()
  std::span<const std::int64_t> run(std::span<const std::int64_t> inputs);

 private:
  const CircuitGraph* c_;
  std::vector<std::int64_t> values_;
  std::vector<std::int64_t> out_;
};

std::vector<std::int64_t> interpret(const CircuitGraph& c, std::span<const std::int64_t> inputs);

}  // namespace inhibitor
