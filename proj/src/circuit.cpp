#include "inhibitor/circuit.hpp"

#include <algorithm>
#include <cmath>

#include "inhibitor/errors.hpp"
#include "inhibitor/quant.hpp"

namespace inhibitor {

int Interval::bits() const { return signed_bits_for(lo, hi); }

std::int64_t lut_apply(std::int64_t x, const LookupTable& table) {
  const Interval dom = table.domain();
  if (!dom.contains(x)) {
    throw OverflowError("lookup '" + table.name + "': " + std::to_string(x) +
                        " outside message space [" + std::to_string(dom.lo) + "," +
                        std::to_string(dom.hi) + "]");
  }
  return table.values[static_cast<std::size_t>(x - table.lo)];
}

std::int64_t quarter_square(std::int64_t x) { return (x * x) / 4; }

CircuitGraph::CircuitGraph(int max_precision) : max_precision_(max_precision) {
  if (max_precision < 1 || max_precision > 16) {
    throw ConfigError("circuit: max precision must be in [1, 16]");
  }
}

NodeId CircuitGraph::at(NodeId id, const char* op) const {
  if (id >= nodes_.size()) {
    throw ConfigError(std::string("circuit ") + op + ": node " + std::to_string(id) +
                      " does not exist");
  }
  return id;
}

NodeId CircuitGraph::push(Node n) {
  n.range = infer_interval(n, nodes_, tables_);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId CircuitGraph::input(Interval range, std::string label) {
  if (range.lo > range.hi) throw ConfigError("circuit input: empty range");
  Node n;
  n.kind = OpKind::Input;
  n.range = range;
  n.label = std::move(label);
  nodes_.push_back(std::move(n));
  inputs_.push_back(nodes_.size() - 1);
  return nodes_.size() - 1;
}

NodeId CircuitGraph::constant(std::int64_t value) {
  Node n;
  n.kind = OpKind::Const;
  n.literal = value;
  return push(std::move(n));
}

NodeId CircuitGraph::add(NodeId a, NodeId b) {
  Node n;
  n.kind = OpKind::Add;
  n.a = at(a, "add");
  n.b = at(b, "add");
  return push(std::move(n));
}

NodeId CircuitGraph::sub(NodeId a, NodeId b) {
  Node n;
  n.kind = OpKind::Sub;
  n.a = at(a, "sub");
  n.b = at(b, "sub");
  return push(std::move(n));
}

NodeId CircuitGraph::neg(NodeId a) {
  Node n;
  n.kind = OpKind::Neg;
  n.a = at(a, "neg");
  return push(std::move(n));
}

NodeId CircuitGraph::mul_const(NodeId a, std::int64_t literal) {
  Node n;
  n.kind = OpKind::MulConst;
  n.a = at(a, "mul_const");
  n.literal = literal;
  return push(std::move(n));
}

NodeId CircuitGraph::lut(NodeId a, const std::string& name,
                         const std::function<std::int64_t(std::int64_t)>& f, std::string label) {
  at(a, "lut");
  const int p = nodes_[a].range.bits();
  if (p > max_precision_) {
    const NodeId id = nodes_.size();
    throw PrecisionError("lookup '" + name + "' at node " + std::to_string(id) +
                             (label.empty() ? "" : " (" + label + ")") + " needs " +
                             std::to_string(p) + "-bit input " + "[" +
                             std::to_string(nodes_[a].range.lo) + "," +
                             std::to_string(nodes_[a].range.hi) + "], precision limit is " +
                             std::to_string(max_precision_),
                         id);
  }
  const auto key = std::make_pair(name, p);
  auto it = table_index_.find(key);
  std::size_t index;
  if (it == table_index_.end()) {
    LookupTable t;
    t.name = name;
    t.precision = p;
    t.lo = signed_min(p);
    t.values.resize(std::size_t{1} << p);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      t.values[i] = f(t.lo + static_cast<std::int64_t>(i));
    }
    tables_.push_back(std::move(t));
    index = tables_.size() - 1;
    table_index_.emplace(key, index);
  } else {
    index = it->second;
  }
  Node n;
  n.kind = OpKind::Lut;
  n.a = a;
  n.table = index;
  n.label = std::move(label);
  return push(std::move(n));
}

Interval infer_interval(const Node& n, std::span<const Node> nodes,
                        std::span<const LookupTable> tables) {
  switch (n.kind) {
    case OpKind::Input:
      return n.range;
    case OpKind::Const:
      return {n.literal, n.literal};
    case OpKind::Add: {
      const Interval& x = nodes[n.a].range;
      const Interval& y = nodes[n.b].range;
      return {x.lo + y.lo, x.hi + y.hi};
    }
    case OpKind::Sub: {
      const Interval& x = nodes[n.a].range;
      const Interval& y = nodes[n.b].range;
      return {x.lo - y.hi, x.hi - y.lo};
    }
    case OpKind::Neg: {
      const Interval& x = nodes[n.a].range;
      return {-x.hi, -x.lo};
    }
    case OpKind::MulConst: {
      const Interval& x = nodes[n.a].range;
      const std::int64_t p = x.lo * n.literal;
      const std::int64_t q = x.hi * n.literal;
      return {std::min(p, q), std::max(p, q)};
    }
    case OpKind::Lut: {
      // Only the slice of the table reachable from the input interval.
      const Interval& x = nodes[n.a].range;
      const LookupTable& t = tables[n.table];
      std::int64_t lo = lut_apply(x.lo, t);
      std::int64_t hi = lo;
      for (std::int64_t v = x.lo + 1; v <= x.hi; ++v) {
        const std::int64_t y = lut_apply(v, t);
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
      return {lo, hi};
    }
  }
  return {};
}

NodeId pbs_mul(CircuitGraph& c, NodeId a, NodeId b) {
  const NodeId sum = c.add(a, b);
  const NodeId diff = c.sub(a, b);
  const NodeId hi = c.lut(sum, "quarter_square", quarter_square);
  const NodeId lo = c.lut(diff, "quarter_square", quarter_square);
  return c.sub(hi, lo);
}

CostReport analyze_bits(const CircuitGraph& c, const CostWeights& weights) {
  CostReport r;
  r.metadata = c.metadata;
  std::vector<Node> nodes = c.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Node& n = nodes[i];
    n.range = infer_interval(n, std::span(nodes).first(i), c.tables());
    switch (n.kind) {
      case OpKind::Lut:
        ++r.pbs_count;
        break;
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Neg:
        ++r.add_count;
        break;
      case OpKind::MulConst:
        ++r.mul_const_count;
        break;
      case OpKind::Input:
      case OpKind::Const:
        break;
    }
    if (n.kind != OpKind::Const) r.max_bits = std::max(r.max_bits, n.range.bits());
  }
  r.est_cost = static_cast<double>(r.pbs_count) * std::pow(weights.pbs_base, r.max_bits) +
               static_cast<double>(r.add_count) * weights.add;
  return r;
}

int circuit_gamma_shift(const AttentionConfig& cfg, const CircuitOptions& opt) {
  if (opt.gamma_shift >= 0) return opt.gamma_shift;
  return static_cast<int>(std::max(0L, std::lround(std::log2(cfg.score_scale))));
}

namespace {

struct Operands {
  std::vector<NodeId> q, k, v;
};

Operands declare_operands(CircuitGraph& c, const AttentionConfig& cfg, int bits) {
  if (bits < 1 || bits > 16) throw ConfigError("circuit: operand bits must be in [1, 16]");
  const Interval range{signed_min(bits), signed_max(bits)};
  const std::size_t n = cfg.seq_len, d = cfg.model_dim;
  Operands ops;
  auto declare = [&](std::vector<NodeId>& dst, const char* name) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k)
        dst.push_back(c.input(range, std::string(name) + "[" + std::to_string(i) + "," +
                                         std::to_string(k) + "]"));
  };
  declare(ops.q, "Q");
  declare(ops.k, "K");
  declare(ops.v, "V");
  return ops;
}

std::string idx(std::size_t a, std::size_t b) {
  return "[" + std::to_string(a) + "," + std::to_string(b) + "]";
}

}  // namespace

CircuitGraph build_inhibitor_circuit(const AttentionConfig& cfg, const CircuitOptions& opt) {
  cfg.validate();
  if (opt.alpha_q < 0) throw ConfigError("circuit: alpha_q must be >= 0");
  CircuitGraph c(opt.max_precision);
  const std::size_t n = cfg.seq_len, d = cfg.model_dim;
  const int shift = circuit_gamma_shift(cfg, opt);
  const Operands ops = declare_operands(c, cfg, opt.bits);
  auto abs_fn = [](std::int64_t x) { return x < 0 ? -x : x; };
  auto relu_fn = [](std::int64_t x) { return x > 0 ? x : std::int64_t{0}; };

  std::vector<NodeId> z(n * n);
  const NodeId alpha = opt.alpha_q > 0 ? c.constant(opt.alpha_q << shift) : 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      NodeId acc = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const NodeId diff = c.sub(ops.q[i * d + k], ops.k[j * d + k]);
        const NodeId a = c.lut(diff, "abs", abs_fn, "|Q-K|" + idx(i, j) + "," + std::to_string(k));
        acc = k == 0 ? a : c.add(acc, a);
      }
      if (opt.alpha_q > 0) {
        acc = c.lut(c.sub(acc, alpha), "relu", relu_fn, "Z'" + idx(i, j));
      }
      z[i * n + j] = acc;
    }

  // gamma = 2^shift is applied by scaling V up instead of Z down.
  std::vector<NodeId> vs(n * d);
  for (std::size_t t = 0; t < n * d; ++t) {
    vs[t] = shift > 0 ? c.mul_const(ops.v[t], std::int64_t{1} << shift) : ops.v[t];
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      NodeId acc = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const NodeId t = c.sub(vs[j * d + k], z[i * n + j]);
        const NodeId r = c.lut(t, "relu", relu_fn, "relu(V-Z)" + idx(i, k) + "," + std::to_string(j));
        acc = j == 0 ? r : c.add(acc, r);
      }
      c.mark_output(acc);
    }
  c.metadata = "inhibitor: gamma=2^" + std::to_string(shift) +
               " applied to V; outputs H at input scale * 2^-" + std::to_string(shift);
  return c;
}

std::int64_t circuit_exp_weight(std::int64_t s, std::int64_t s_hi, double score_scale,
                                std::int64_t w_max) {
  return std::llround(static_cast<double>(w_max) *
                      std::exp(static_cast<double>(s - s_hi) * score_scale));
}

CircuitGraph build_dotprod_circuit(const AttentionConfig& cfg, const CircuitOptions& opt) {
  cfg.validate();
  CircuitGraph c(opt.max_precision);
  const std::size_t n = cfg.seq_len, d = cfg.model_dim;
  const Operands ops = declare_operands(c, cfg, opt.bits);

  std::vector<NodeId> s(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      NodeId acc = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const NodeId p = pbs_mul(c, ops.q[i * d + k], ops.k[j * d + k]);
        acc = k == 0 ? p : c.add(acc, p);
      }
      s[i * n + j] = acc;
    }

  // Operands carry bits-1 fractional bits, so a score unit is 2^-2(bits-1);
  // 1/sqrt(d) is folded into the table. Without a max, the table is anchored
  // at the largest reachable score so weights stay in [0, 2^bits - 1].
  const double score_scale =
      std::ldexp(1.0, -2 * (opt.bits - 1)) / std::sqrt(static_cast<double>(d));
  const std::int64_t w_max = signed_max(opt.bits + 1);
  std::vector<NodeId> w(n * n);
  for (std::size_t t = 0; t < n * n; ++t) {
    const std::int64_t s_hi = c.nodes()[s[t]].range.hi;
    w[t] = c.lut(
        s[t], "exp@" + std::to_string(s_hi),
        [=](std::int64_t x) { return circuit_exp_weight(std::min(x, s_hi), s_hi, score_scale, w_max); },
        "exp(S)" + idx(t / n, t % n));
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      NodeId acc = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const NodeId p = pbs_mul(c, w[i * n + j], ops.v[j * d + k]);
        acc = j == 0 ? p : c.add(acc, p);
      }
      c.mark_output(acc);
    }
  for (std::size_t i = 0; i < n; ++i) {
    NodeId acc = w[i * n];
    for (std::size_t j = 1; j < n; ++j) acc = c.add(acc, w[i * n + j]);
    c.mark_output(acc);
  }
  c.metadata = "dotprod: softmax division deferred to the client; outputs are n*d numerators "
               "then n denominators";
  return c;
}

std::span<const std::int64_t> Interpreter::run(std::span<const std::int64_t> inputs) {
  const auto& nodes = c_->nodes();
  const auto& tables = c_->tables();
  if (inputs.size() != c_->inputs().size()) {
    throw ConfigError("interpret: expected " + std::to_string(c_->inputs().size()) +
                      " inputs, got " + std::to_string(inputs.size()));
  }
  std::size_t next_input = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    std::int64_t x = 0;
    switch (n.kind) {
      case OpKind::Input:
        x = inputs[next_input++];
        break;
      case OpKind::Const:
        x = n.literal;
        break;
      case OpKind::Add:
        x = values_[n.a] + values_[n.b];
        break;
      case OpKind::Sub:
        x = values_[n.a] - values_[n.b];
        break;
      case OpKind::Neg:
        x = -values_[n.a];
        break;
      case OpKind::MulConst:
        x = values_[n.a] * n.literal;
        break;
      case OpKind::Lut:
        x = lut_apply(values_[n.a], tables[n.table]);
        break;
    }
    if (!n.range.contains(x)) {
      throw OverflowError("node " + std::to_string(i) + (n.label.empty() ? "" : " (" + n.label + ")") +
                          ": value " + std::to_string(x) + " escapes analyzed interval [" +
                          std::to_string(n.range.lo) + "," + std::to_string(n.range.hi) + "]");
    }
    values_[i] = x;
  }
  out_.resize(c_->outputs().size());
  for (std::size_t o = 0; o < out_.size(); ++o) out_[o] = values_[c_->outputs()[o]];
  return out_;
}

std::vector<std::int64_t> interpret(const CircuitGraph& c, std::span<const std::int64_t> inputs) {
  Interpreter it(c);
  const auto out = it.run(inputs);
  return {out.begin(), out.end()};
}

}  // namespace inhibitor
