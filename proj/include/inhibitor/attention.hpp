#pragma once

#include <cmath>
#include <cstddef>
#include <string_view>

#include "inhibitor/tensor.hpp"

namespace inhibitor {

enum class Mechanism { DotProd, Inhibitor };

std::string_view to_string(Mechanism m);
// Accepts "dotprod" / "inhibitor"; throws ConfigError otherwise.
Mechanism parse_mechanism(std::string_view name);

struct AttentionConfig {
  std::size_t seq_len = 1;
  std::size_t model_dim = 1;
  double score_scale = 1.0;  // gamma; Manhattan sums are divided by it
  double score_shift = 0.5;  // alpha
  Mechanism mechanism = Mechanism::Inhibitor;
  bool signed_values = false;
  std::size_t heads = 1;

  // gamma = sqrt(d), alpha = 0.5
  static AttentionConfig defaults(std::size_t seq_len, std::size_t model_dim,
                                  Mechanism mechanism = Mechanism::Inhibitor) {
    AttentionConfig cfg;
    cfg.seq_len = seq_len;
    cfg.model_dim = model_dim;
    cfg.score_scale = std::sqrt(static_cast<double>(model_dim));
    cfg.mechanism = mechanism;
    return cfg;
  }

  // Throws ConfigError on gamma <= 0, alpha < 0, n == 0, d == 0, or heads not
  // dividing d.
  void validate() const;
};

// Softmax(Q K^T / sqrt(d)) V
Tensor2D dotprod_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v, std::size_t d);

// Z(i, j) = sum_k |Q(i, k) - K(j, k)| / gamma
Tensor2D manhattan_scores(const Tensor2D& q, const Tensor2D& k, double gamma);

// Z' = relu(Z - alpha)
Tensor2D shift_scores(const Tensor2D& z, double alpha);

// H(i, k) = sum_j relu(V(j, k) - Z(i, j)), explicit triple loop.
Tensor2D inhibit_naive(const Tensor2D& v, const Tensor2D& z);

// Same quantity through x+ = (x + |x|) / 2:
//   H(i, k) = 1/2 sum_j V(j, k) - 1/2 sum_j Z(i, j) + 1/2 sum_j |V(j, k) - Z(i, j)|
// The last term is a pairwise L1 distance between the columns of V and the
// rows of Z, evaluated one (i, k) pair at a time.
Tensor2D inhibit_fused(const Tensor2D& v, const Tensor2D& z);

// Signed variant: H(i, k) = sum_j relu(V+(j, k) - Z(i, j)) + sum_j min(0, V-(j, k) + Z(i, j)),
// with V+ = max(0, V) and V- = min(0, V). Entries with Z = 0 pass through.
Tensor2D signed_inhibit_naive(const Tensor2D& v, const Tensor2D& z);

// H(i, k) = 1/2 sum_j V(j, k) + 1/2 sum_j |V+(j, k) - Z(i, j)| - 1/2 sum_j |V-(j, k) + Z(i, j)|
Tensor2D signed_inhibit_fused(const Tensor2D& v, const Tensor2D& z);

// manhattan_scores -> shift_scores -> (signed_)inhibit_fused, per head.
Tensor2D inhibitor_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                             const AttentionConfig& cfg);

// Dispatches on cfg.mechanism. Heads are contiguous column slices of Q/K/V
// that share cfg; their outputs are concatenated.
Tensor2D attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                   const AttentionConfig& cfg);

// relu(X W1^T + b1) W2 + b2. W1 is hidden x d, W2 is hidden x d_out, biases
// are single rows broadcast over positions.
Tensor2D ffn(const Tensor2D& x, const Tensor2D& w1, const Tensor2D& b1, const Tensor2D& w2,
             const Tensor2D& b2);

// Per-row normalization to zero mean and unit variance (no learned affine).
Tensor2D layer_norm(const Tensor2D& x, double eps = 1e-5);

struct BlockWeights {
  Tensor2D wq, wk, wv;  // d x d
  Tensor2D wo;          // d x d
  Tensor2D w1, b1;      // hidden x d, 1 x hidden
  Tensor2D w2, b2;      // hidden x d, 1 x d

  static BlockWeights zeros(std::size_t d, std::size_t hidden);
};

/// Pre-normalization residual block:
///   Y = X + attention(LN(X) Wq, LN(X) Wk, LN(X) Wv) Wo
///   out = Y + ffn(LN(Y))
Tensor2D transformer_block(const Tensor2D& x, const BlockWeights& w, const AttentionConfig& cfg);

}  // namespace inhibitor
