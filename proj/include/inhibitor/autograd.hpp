#pragma once

// Tape-based reverse-mode differentiation over Tensor2D values.
//
// A Graph owns every intermediate of one forward pass. Ops append a node
// holding the forward value and a closure that pushes the node's gradient to
// its parents; Graph::backward() walks the tape in reverse. Non-smooth ops
// (relu, abs and everything built from them) use a zero subgradient at the
// kink and record how close their inputs came to one, so finite-difference
// checks can reject samples that straddle a kink.

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "inhibitor/tensor.hpp"

namespace inhibitor::ag {

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor2D& value() const;
  const Tensor2D& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  Var leaf(Tensor2D value);
  Var push(Tensor2D value, Backward backward);

  const Tensor2D& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor2D& grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient buffer of a node, allocated on first use.
  Tensor2D& grad_mut(std::size_t id);

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and runs the tape backwards.
  void backward(Var loss);

  void note_kink_distance(double d) {
    if (d < kink_margin_) kink_margin_ = d;
  }
  // Smallest distance to a non-differentiable point seen in the forward pass.
  double kink_margin() const { return kink_margin_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Record {
    Tensor2D value;
    Tensor2D grad;
    Backward backward;
  };
  std::vector<Record> nodes_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var x, Var bias);
Var scale(Var a, double factor);
Var relu(Var a);
Var abs(Var a);
Var cdist_manhattan(Var a, Var b);
Var manhattan_scores(Var q, Var k, double gamma);
Var shift_scores(Var z, double alpha);
Var inhibit_fused(Var v, Var z);
Var signed_inhibit_fused(Var v, Var z);
Var softmax_rows(Var a);
Var layer_norm(Var x, double eps = 1e-5);
// relu(x w1^T + b1) w2 + b2
Var ffn(Var x, Var w1, Var b1, Var w2, Var b2);
// Column means over consecutive groups of `group` rows: (rows/group) x cols.
Var mean_pool(Var x, std::size_t group);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
// mean over entries of (pred - target)^2, as a 1x1 node.
Var mse_loss(Var pred, const Tensor2D& target);

}  // namespace inhibitor::ag
