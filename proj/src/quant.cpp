#include "inhibitor/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "inhibitor/errors.hpp"

namespace inhibitor {

namespace {

constexpr std::int64_t kI32Max = std::numeric_limits<std::int32_t>::max();
constexpr std::int64_t kI32Min = std::numeric_limits<std::int32_t>::min();

bool fits_i32(std::int64_t x) { return x >= kI32Min && x <= kI32Max; }

std::int64_t saturate(std::int64_t x, int bits, QuantStats* stats) {
  const std::int64_t lo = signed_min(bits);
  const std::int64_t hi = signed_max(bits);
  if (x < lo || x > hi) {
    if (stats) ++stats->saturated;
    return x < lo ? lo : hi;
  }
  return x;
}

std::int64_t max_abs_entry(const QTensor& t) {
  std::int64_t m = 0;
  for (std::int32_t v : t.data) m = std::max<std::int64_t>(m, std::llabs(v));
  return m;
}

void require_qshape(bool ok, const char* op, const QTensor& a, const QTensor& b) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": shape " + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols));
  }
}

void require_attention_operands(const char* op, const QTensor& q, const QTensor& k,
                                const QTensor& v) {
  require_qshape(q.cols == k.cols, op, q, k);
  require_qshape(k.rows == v.rows, op, k, v);
  if (q.scale_exp != k.scale_exp || k.scale_exp != v.scale_exp) {
    throw ConfigError(std::string(op) + ": Q, K, V must share one scale exponent");
  }
}

[[noreturn]] void overflow_at(const char* op, const char* what, std::size_t i, std::size_t j,
                              std::int64_t value) {
  throw OverflowError(std::string(op) + ": " + what + " at (" + std::to_string(i) + "," +
                      std::to_string(j) + ") = " + std::to_string(value) +
                      " exceeds the 32-bit accumulator");
}

// sum_k |a[k] - b[k]|
template <typename Acc>
Acc l1(const std::int32_t* a, const std::int32_t* b, std::size_t n) {
  Acc acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const Acc diff = static_cast<Acc>(a[k]) - static_cast<Acc>(b[k]);
    acc += diff < 0 ? -diff : diff;
  }
  return acc;
}

template <typename Acc>
Acc dot(const std::int32_t* a, const std::int32_t* b, std::size_t n) {
  Acc acc = 0;
  for (std::size_t k = 0; k < n; ++k) acc += static_cast<Acc>(a[k]) * static_cast<Acc>(b[k]);
  return acc;
}

// acc[k] += |row[k] - z|
template <typename Acc>
void accumulate_abs_diff(Acc* acc, const std::int32_t* row, std::int32_t z, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const Acc diff = static_cast<Acc>(row[k]) - static_cast<Acc>(z);
    acc[k] += diff < 0 ? -diff : diff;
  }
}

// acc[k] += w * row[k]
template <typename Acc>
void accumulate_scaled(Acc* acc, const std::int32_t* row, std::int32_t w, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) acc[k] += static_cast<Acc>(w) * static_cast<Acc>(row[k]);
}

template <typename Acc>
void manhattan_sums(const QTensor& q, const QTensor& k, std::vector<std::int64_t>& zsum) {
  for (std::size_t i = 0; i < q.rows; ++i) {
    const std::int32_t* qi = q.data.data() + i * q.cols;
    for (std::size_t j = 0; j < k.rows; ++j) {
      zsum[i * k.rows + j] = l1<Acc>(qi, k.data.data() + j * k.cols, q.cols);
    }
  }
}

template <typename Acc>
void inhibit_fused_int(const std::vector<std::int32_t>& vs, std::size_t n_k, std::size_t dv,
                       const std::vector<std::int32_t>& zs, std::size_t n_q,
                       std::vector<std::int64_t>& dist) {
  std::vector<Acc> acc(dv);
  for (std::size_t i = 0; i < n_q; ++i) {
    std::fill(acc.begin(), acc.end(), Acc{0});
    for (std::size_t j = 0; j < n_k; ++j) {
      accumulate_abs_diff<Acc>(acc.data(), vs.data() + j * dv, zs[i * n_k + j], dv);
    }
    for (std::size_t c = 0; c < dv; ++c) dist[i * dv + c] = acc[c];
  }
}

template <typename Acc>
void scores_int(const QTensor& q, const QTensor& k, std::vector<std::int64_t>& s) {
  for (std::size_t i = 0; i < q.rows; ++i) {
    const std::int32_t* qi = q.data.data() + i * q.cols;
    for (std::size_t j = 0; j < k.rows; ++j) {
      s[i * k.rows + j] = dot<Acc>(qi, k.data.data() + j * k.cols, q.cols);
    }
  }
}

template <typename Acc>
void weighted_values(const std::vector<std::int32_t>& w, const QTensor& v, std::size_t n_q,
                     std::vector<std::int64_t>& out) {
  std::vector<Acc> acc(v.cols);
  for (std::size_t i = 0; i < n_q; ++i) {
    std::fill(acc.begin(), acc.end(), Acc{0});
    for (std::size_t j = 0; j < v.rows; ++j) {
      accumulate_scaled<Acc>(acc.data(), v.data.data() + j * v.cols, w[i * v.rows + j], v.cols);
    }
    for (std::size_t c = 0; c < v.cols; ++c) out[i * v.cols + c] = acc[c];
  }
}

}  // namespace

std::int64_t signed_min(int bits) { return -(std::int64_t{1} << (bits - 1)); }
std::int64_t signed_max(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

int signed_bits_for(std::int64_t lo, std::int64_t hi) {
  int b = 1;
  while (lo < signed_min(b) || hi > signed_max(b)) ++b;
  return b;
}

std::int64_t round_shift(std::int64_t x, int shift) {
  if (shift <= 0) return x * (std::int64_t{1} << -shift);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  const std::int64_t mag = x < 0 ? -x : x;
  const std::int64_t r = (mag + half) >> shift;
  return x < 0 ? -r : r;
}

void QTensor::validate() const {
  if (data.size() != rows * cols) {
    throw ConfigError("QTensor: data length " + std::to_string(data.size()) + " != " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (bits < 2 || bits > 32) throw ConfigError("QTensor: bits must be in [2, 32]");
  for (std::int32_t v : data) {
    if (v < signed_min(bits) || v > signed_max(bits)) {
      throw ConfigError("QTensor: entry " + std::to_string(v) + " exceeds " +
                        std::to_string(bits) + " bits");
    }
  }
}

QTensor quantize(const Tensor2D& a, int bits, int scale_exp, QuantStats* stats) {
  if (bits != 8 && bits != 16) throw ConfigError("quantize: bits must be 8 or 16");
  QTensor q{a.rows(), a.cols(), std::vector<std::int32_t>(a.size()), scale_exp, bits};
  const double inv = std::ldexp(1.0, -scale_exp);
  const double lo = static_cast<double>(signed_min(bits));
  const double hi = static_cast<double>(signed_max(bits));
  for (std::size_t i = 0; i < a.size(); ++i) {
    // std::round rounds half away from zero.
    const double r = std::round(a.data()[i] * inv);
    double c = r;
    if (r < lo || r > hi) {
      if (stats) ++stats->saturated;
      c = r < lo ? lo : hi;
    }
    q.data[i] = static_cast<std::int32_t>(c);
  }
  return q;
}

Tensor2D dequantize(const QTensor& q) {
  Tensor2D out(q.rows, q.cols);
  for (std::size_t i = 0; i < q.data.size(); ++i) {
    out.data()[i] = std::ldexp(static_cast<double>(q.data[i]), q.scale_exp);
  }
  return out;
}

QTensor requantize(const QTensor& q, int new_scale_exp, int new_bits, QuantStats* stats) {
  if (new_bits != 8 && new_bits != 16 && new_bits != 32) {
    throw ConfigError("requantize: bits must be 8, 16 or 32");
  }
  QTensor out{q.rows, q.cols, std::vector<std::int32_t>(q.data.size()), new_scale_exp, new_bits};
  const int shift = new_scale_exp - q.scale_exp;
  for (std::size_t i = 0; i < q.data.size(); ++i) {
    out.data[i] = static_cast<std::int32_t>(saturate(round_shift(q.data[i], shift), new_bits, stats));
  }
  return out;
}

QTensor q_manhattan_inhibitor(const QTensor& q, const QTensor& k, const QTensor& v,
                              std::int64_t alpha_q, int gamma_shift) {
  constexpr const char* op = "q_manhattan_inhibitor";
  require_attention_operands(op, q, k, v);
  if (alpha_q < 0) throw ConfigError("q_manhattan_inhibitor: alpha_q must be >= 0");
  if (gamma_shift < 0 || gamma_shift > 15) {
    throw ConfigError("q_manhattan_inhibitor: gamma_shift must be in [0, 15]");
  }
  const std::size_t nq = q.rows, nk = k.rows, dv = v.cols;

  // Score stage: |q - k| <= mq + mk, summed over d.
  const std::int64_t zmax = static_cast<std::int64_t>(q.cols) * (max_abs_entry(q) + max_abs_entry(k));
  std::vector<std::int64_t> zsum(nq * nk);
  if (fits_i32(zmax)) {
    manhattan_sums<std::int32_t>(q, k, zsum);
  } else {
    manhattan_sums<std::int64_t>(q, k, zsum);
  }

  // Any score at or above the largest representable V' suppresses the term
  // entirely, so capping there leaves H unchanged and bounds |V' - Z'|.
  const std::int64_t zcap = signed_max(v.bits) << gamma_shift;
  const std::int64_t shift_amount = alpha_q << gamma_shift;
  std::vector<std::int32_t> zs(nq * nk);
  std::vector<std::int64_t> zrow(nq, 0);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < nk; ++j) {
      const std::int64_t z = std::clamp<std::int64_t>(zsum[i * nk + j] - shift_amount, 0, zcap);
      zs[i * nk + j] = static_cast<std::int32_t>(z);
      zrow[i] += z;
    }
  }

  std::vector<std::int32_t> vs(v.data.size());
  std::vector<std::int64_t> vcol(dv, 0);
  for (std::size_t j = 0; j < nk; ++j)
    for (std::size_t c = 0; c < dv; ++c) {
      const std::int64_t x = static_cast<std::int64_t>(v.data[j * dv + c]) << gamma_shift;
      vs[j * dv + c] = static_cast<std::int32_t>(x);
      vcol[c] += x;
    }

  const std::int64_t vmax = max_abs_entry(v) << gamma_shift;
  const std::int64_t dist_bound = static_cast<std::int64_t>(nk) * (vmax + std::min(zmax, zcap));
  std::vector<std::int64_t> dist(nq * dv);
  if (fits_i32(dist_bound)) {
    inhibit_fused_int<std::int32_t>(vs, nk, dv, zs, nq, dist);
  } else {
    inhibit_fused_int<std::int64_t>(vs, nk, dv, zs, nq, dist);
  }

  QTensor h{nq, dv, std::vector<std::int32_t>(nq * dv), v.scale_exp - gamma_shift, 32};
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t c = 0; c < dv; ++c) {
      // (x + |x|) is even term by term, so the numerator is even.
      const std::int64_t value = (vcol[c] - zrow[i] + dist[i * dv + c]) / 2;
      if (!fits_i32(value)) overflow_at(op, "inhibition sum", i, c, value);
      h.data[i * dv + c] = static_cast<std::int32_t>(value);
    }
  return h;
}

const std::array<std::int32_t, kExpTableSize>& exp_table() {
  static const auto table = [] {
    std::array<std::int32_t, kExpTableSize> t{};
    for (int i = 0; i < kExpTableSize; ++i) {
      t[i] = static_cast<std::int32_t>(
          std::lround(std::ldexp(std::exp(-static_cast<double>(i) / (1 << kExpTableStepLog2)),
                                 kSoftmaxWeightBits)));
    }
    return t;
  }();
  return table;
}

std::vector<std::int32_t> q_softmax_weights(std::span<const std::int64_t> scores,
                                            int score_scale_exp) {
  const auto& table = exp_table();
  std::vector<std::int32_t> w(scores.size(), 0);
  if (scores.empty()) return w;
  const std::int64_t top = *std::max_element(scores.begin(), scores.end());
  // Table position in units of 2^-8 of a table step.
  constexpr int kFrac = 8;
  const int pos_shift = score_scale_exp + kExpTableStepLog2 + kFrac;
  constexpr std::int64_t kEnd = std::int64_t{kExpTableSize} << kFrac;
  // Beyond the table, weights are zero; clamp the gap before shifting left.
  const std::int64_t gap_limit = pos_shift >= 0 ? (kEnd >> std::min(pos_shift, 62)) + 1
                                                : std::numeric_limits<std::int64_t>::max();
  std::int64_t total = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const std::int64_t gap = top - scores[j];
    if (gap >= gap_limit) continue;
    const std::int64_t pos = round_shift(gap, -pos_shift);
    if (pos >= kEnd) continue;
    const std::int64_t idx = pos >> kFrac;
    const std::int64_t frac = pos & ((1 << kFrac) - 1);
    const std::int64_t a = table[static_cast<std::size_t>(idx)];
    const std::int64_t b = idx + 1 < kExpTableSize ? table[static_cast<std::size_t>(idx + 1)] : 0;
    w[j] = static_cast<std::int32_t>(a - (((a - b) * frac + (1 << (kFrac - 1))) >> kFrac));
    total += w[j];
  }
  // total >= 2^15 because the row maximum maps to table[0].
  const std::int64_t budget = std::int64_t{1} << kSoftmaxWeightBits;
  for (auto& x : w) x = static_cast<std::int32_t>((x * budget + total / 2) / total);
  return w;
}

QTensor q_dotprod_attention(const QTensor& q, const QTensor& k, const QTensor& v) {
  constexpr const char* op = "q_dotprod_attention";
  require_attention_operands(op, q, k, v);
  const std::size_t nq = q.rows, nk = k.rows, d = q.cols;

  const std::int64_t smax = static_cast<std::int64_t>(d) * max_abs_entry(q) * max_abs_entry(k);
  std::vector<std::int64_t> s(nq * nk);
  if (fits_i32(smax)) {
    scores_int<std::int32_t>(q, k, s);
  } else {
    scores_int<std::int64_t>(q, k, s);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < nk; ++j)
        if (!fits_i32(s[i * nk + j])) overflow_at(op, "score", i, j, s[i * nk + j]);
  }

  const std::int64_t inv_sqrt_d =
      std::llround(std::ldexp(1.0 / std::sqrt(static_cast<double>(d)), kSoftmaxWeightBits));
  for (auto& x : s) x = round_shift(x * inv_sqrt_d, kSoftmaxWeightBits);

  std::vector<std::int32_t> w(nq * nk);
  for (std::size_t i = 0; i < nq; ++i) {
    const auto row = q_softmax_weights(std::span(s).subspan(i * nk, nk), 2 * q.scale_exp);
    std::copy(row.begin(), row.end(), w.begin() + static_cast<std::ptrdiff_t>(i * nk));
  }

  // Row weights sum to at most 2^15 + n/2, so the weighted sum is bounded by
  // that times max |V|.
  const std::int64_t wsum = (std::int64_t{1} << kSoftmaxWeightBits) + static_cast<std::int64_t>(nk);
  std::vector<std::int64_t> acc(nq * v.cols);
  if (fits_i32(wsum * max_abs_entry(v))) {
    weighted_values<std::int32_t>(w, v, nq, acc);
  } else {
    weighted_values<std::int64_t>(w, v, nq, acc);
  }

  QTensor out{nq, v.cols, std::vector<std::int32_t>(nq * v.cols), v.scale_exp, v.bits};
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.data[i] = static_cast<std::int32_t>(
        saturate(round_shift(acc[i], kSoftmaxWeightBits), v.bits, nullptr));
  }
  return out;
}

int inhibitor_accumulator_bits(int bits, std::size_t n, std::size_t d, int gamma_shift) {
  const std::int64_t diff = signed_max(bits) - signed_min(bits);
  const std::int64_t zmax = static_cast<std::int64_t>(d) * diff;
  const std::int64_t vmax = signed_max(bits) << gamma_shift;
  const std::int64_t vmin = signed_min(bits) * (std::int64_t{1} << gamma_shift);
  const std::int64_t zcap = std::min(zmax, vmax);
  // |V' - Z'| with Z' in [0, zcap], summed over n keys.
  const std::int64_t term = std::max(vmax, zcap - vmin);
  const int score = signed_bits_for(0, zmax);
  const int fused = signed_bits_for(0, static_cast<std::int64_t>(n) * term);
  return std::max(score, fused);
}

int dotprod_accumulator_bits(int bits, std::size_t n, std::size_t d) {
  const std::int64_t prod = signed_min(bits) * signed_min(bits);
  const int score = signed_bits_for(-static_cast<std::int64_t>(d) * prod,
                                    static_cast<std::int64_t>(d) * prod);
  const std::int64_t wsum = (std::int64_t{1} << kSoftmaxWeightBits) + static_cast<std::int64_t>(n);
  const int weighted = signed_bits_for(wsum * signed_min(bits), wsum * signed_max(bits));
  return std::max(score, weighted);
}

}  // namespace inhibitor
