#include "inhibitor/attention.hpp"

#include <algorithm>
#include <vector>

#include "inhibitor/errors.hpp"

namespace inhibitor {

std::string_view to_string(Mechanism m) {
  return m == Mechanism::DotProd ? "dotprod" : "inhibitor";
}

Mechanism parse_mechanism(std::string_view name) {
  if (name == "dotprod") return Mechanism::DotProd;
  if (name == "inhibitor") return Mechanism::Inhibitor;
  throw ConfigError("unknown mechanism '" + std::string(name) + "' (expected dotprod|inhibitor)");
}

void AttentionConfig::validate() const {
  if (!(score_scale > 0.0)) throw ConfigError("score scale gamma must be > 0");
  if (!(score_shift >= 0.0)) throw ConfigError("score shift alpha must be >= 0");
  if (seq_len == 0) throw ConfigError("sequence length must be >= 1");
  if (model_dim == 0) throw ConfigError("model dim must be >= 1");
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide model dim (" +
                      std::to_string(model_dim) + ")");
  }
}

Tensor2D dotprod_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                           std::size_t d) {
  require_shape(q.cols() == k.cols(), "dotprod_attention(Q,K)", q, k);
  require_shape(k.rows() == v.rows(), "dotprod_attention(K,V)", k, v);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  return matmul(softmax_rows(scale(matmul_nt(q, k), inv)), v);
}

Tensor2D manhattan_scores(const Tensor2D& q, const Tensor2D& k, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("manhattan_scores: gamma must be > 0");
  require_shape(q.cols() == k.cols(), "manhattan_scores", q, k);
  return scale(cdist_manhattan(q, k), 1.0 / gamma);
}

Tensor2D shift_scores(const Tensor2D& z, double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("shift_scores: alpha must be >= 0");
  if (alpha == 0.0) return z;
  return relu(add_scalar(z, -alpha));
}

Tensor2D inhibit_naive(const Tensor2D& v, const Tensor2D& z) {
  require_shape(z.cols() == v.rows(), "inhibit_naive", v, z);
  Tensor2D h(z.rows(), v.cols());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t k = 0; k < v.cols(); ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < v.rows(); ++j) {
        const double x = v(j, k) - z(i, j);
        acc += x > 0.0 ? x : 0.0;
      }
      h(i, k) = acc;
    }
  return h;
}

Tensor2D inhibit_fused(const Tensor2D& v, const Tensor2D& z) {
  require_shape(z.cols() == v.rows(), "inhibit_fused", v, z);
  const Tensor2D vsum = colsum(v);
  const Tensor2D zsum = rowsum(z);
  const Tensor2D dist = cdist_manhattan(z, transpose(v));
  Tensor2D h(z.rows(), v.cols());
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t k = 0; k < h.cols(); ++k)
      // Cancellation can leave -1e-16 where the exact sum is zero.
      h(i, k) = std::max(0.0, 0.5 * (vsum(0, k) - zsum(i, 0) + dist(i, k)));
  return h;
}

Tensor2D signed_inhibit_naive(const Tensor2D& v, const Tensor2D& z) {
  require_shape(z.cols() == v.rows(), "signed_inhibit_naive", v, z);
  Tensor2D h(z.rows(), v.cols());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t k = 0; k < v.cols(); ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < v.rows(); ++j) {
        const double x = v(j, k);
        const double pos = (x > 0.0 ? x : 0.0) - z(i, j);
        const double neg = (x < 0.0 ? x : 0.0) + z(i, j);
        acc += (pos > 0.0 ? pos : 0.0) + (neg < 0.0 ? neg : 0.0);
      }
      h(i, k) = acc;
    }
  return h;
}

Tensor2D signed_inhibit_fused(const Tensor2D& v, const Tensor2D& z) {
  require_shape(z.cols() == v.rows(), "signed_inhibit_fused", v, z);
  const Tensor2D vsum = colsum(v);
  const Tensor2D pos = cdist_manhattan(z, transpose(relu(v)));
  const Tensor2D neg = cdist_manhattan(scale(z, -1.0), transpose(negrelu(v)));
  Tensor2D h(z.rows(), v.cols());
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t k = 0; k < h.cols(); ++k)
      h(i, k) = 0.5 * (vsum(0, k) + pos(i, k) - neg(i, k));
  return h;
}

namespace {

Tensor2D inhibitor_head(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                        const AttentionConfig& cfg) {
  const Tensor2D z = shift_scores(manhattan_scores(q, k, cfg.score_scale), cfg.score_shift);
  return cfg.signed_values ? signed_inhibit_fused(v, z) : inhibit_fused(v, z);
}

template <typename Head>
Tensor2D per_head(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                  const AttentionConfig& cfg, Head head) {
  if (cfg.heads <= 1) return head(q, k, v);
  if (q.cols() % cfg.heads != 0 || v.cols() % cfg.heads != 0) {
    throw DimensionError("attention: " + std::to_string(cfg.heads) + " heads do not divide " +
                         q.shape_str() + " / " + v.shape_str());
  }
  const std::size_t qk = q.cols() / cfg.heads;
  const std::size_t vk = v.cols() / cfg.heads;
  std::vector<Tensor2D> outs;
  outs.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    outs.push_back(head(slice_cols(q, h * qk, (h + 1) * qk), slice_cols(k, h * qk, (h + 1) * qk),
                        slice_cols(v, h * vk, (h + 1) * vk)));
  }
  return concat_cols(outs);
}

}  // namespace

Tensor2D inhibitor_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                             const AttentionConfig& cfg) {
  require_shape(q.cols() == k.cols(), "inhibitor_attention(Q,K)", q, k);
  require_shape(k.rows() == v.rows(), "inhibitor_attention(K,V)", k, v);
  return per_head(q, k, v, cfg, [&](const Tensor2D& a, const Tensor2D& b, const Tensor2D& c) {
    return inhibitor_head(a, b, c, cfg);
  });
}

Tensor2D attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                   const AttentionConfig& cfg) {
  if (cfg.mechanism == Mechanism::Inhibitor) return inhibitor_attention(q, k, v, cfg);
  return per_head(q, k, v, cfg, [](const Tensor2D& a, const Tensor2D& b, const Tensor2D& c) {
    return dotprod_attention(a, b, c, a.cols());
  });
}

Tensor2D ffn(const Tensor2D& x, const Tensor2D& w1, const Tensor2D& b1, const Tensor2D& w2,
             const Tensor2D& b2) {
  require_shape(x.cols() == w1.cols(), "ffn(X,W1)", x, w1);
  require_shape(w1.rows() == w2.rows(), "ffn(W1,W2)", w1, w2);
  const Tensor2D hidden = relu(add_row(matmul_nt(x, w1), b1));
  return add_row(matmul(hidden, w2), b2);
}

Tensor2D layer_norm(const Tensor2D& x, double eps) {
  Tensor2D out(x.rows(), x.cols());
  const double inv_n = 1.0 / static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean *= inv_n;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var *= inv_n;
    const double inv_sd = 1.0 / std::sqrt(var + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] = (r[j] - mean) * inv_sd;
  }
  return out;
}

BlockWeights BlockWeights::zeros(std::size_t d, std::size_t hidden) {
  return {Tensor2D(d, d),      Tensor2D(d, d),      Tensor2D(d, d),
          Tensor2D(d, d),      Tensor2D(hidden, d), Tensor2D(1, hidden),
          Tensor2D(hidden, d), Tensor2D(1, d)};
}

Tensor2D transformer_block(const Tensor2D& x, const BlockWeights& w, const AttentionConfig& cfg) {
  cfg.validate();
  const Tensor2D xn = layer_norm(x);
  const Tensor2D heads = attention(matmul(xn, w.wq), matmul(xn, w.wk), matmul(xn, w.wv), cfg);
  const Tensor2D y = add(x, matmul(heads, w.wo));
  return add(y, ffn(layer_norm(y), w.w1, w.b1, w.w2, w.b2));
}

}  // namespace inhibitor
