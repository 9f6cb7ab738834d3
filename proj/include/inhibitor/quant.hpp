#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "inhibitor/tensor.hpp"

namespace inhibitor {

/// Fixed-point tensor: value(i, j) = data(i, j) * 2^scale_exp.
///
/// `bits` is the signed storage width every entry fits in. quantize() only
/// produces 8 or 16; kernel outputs that accumulate over the sequence are
/// reported at 32.
struct QTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> data;
  int scale_exp = 0;
  int bits = 16;

  std::int32_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::int32_t& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }

  // Throws ConfigError if data.size() != rows * cols or an entry exceeds `bits`.
  void validate() const;
};

struct QuantStats {
  std::size_t saturated = 0;
};

std::int64_t signed_min(int bits);
std::int64_t signed_max(int bits);

// x / 2^shift rounded half away from zero for shift > 0; x * 2^-shift otherwise.
std::int64_t round_shift(std::int64_t x, int shift);

QTensor quantize(const Tensor2D& a, int bits, int scale_exp, QuantStats* stats = nullptr);
Tensor2D dequantize(const QTensor& q);
// Shift-and-round to a new scale, saturating to new_bits (8, 16 or 32).
QTensor requantize(const QTensor& q, int new_scale_exp, int new_bits,
                   QuantStats* stats = nullptr);

/// Integer Manhattan score plus ReLU inhibition.
///
/// Q, K and V share one scale exponent e. gamma = 2^gamma_shift and
/// alpha = alpha_q * 2^e. Instead of shifting the score right (which would
/// round), V is shifted left by gamma_shift, so the result is exact:
///
///   Zsum(i, j) = sum_k |Q(i, k) - K(j, k)|
///   Z'(i, j)   = max(0, Zsum(i, j) - alpha_q * 2^gamma_shift)
///   H(i, k)    = sum_j max(0, V(j, k) * 2^gamma_shift - Z'(i, j))
///
/// evaluated through the fused identity (sum V - sum Z + sum |V - Z|) / 2,
/// whose numerator is always even. The output has scale e - gamma_shift and
/// bits = 32. Accumulators are 32-bit whenever a bound from the operand
/// magnitudes proves it safe, 64-bit otherwise; a result that does not fit
/// 32 bits raises OverflowError naming the output position.
QTensor q_manhattan_inhibitor(const QTensor& q, const QTensor& k, const QTensor& v,
                              std::int64_t alpha_q, int gamma_shift);

/// Integer softmax attention.
///
/// Q K^T is accumulated at scale 2e (the widening step), multiplied by the
/// Q15 literal round(2^15 / sqrt(d)), max-subtracted per row, passed through
/// the exponential table, renormalized so the integer weights of each row sum
/// to 2^15 +- n, applied to V, and shifted back to V's scale and width.
QTensor q_dotprod_attention(const QTensor& q, const QTensor& k, const QTensor& v);

// 256 entries of round(2^15 * exp(-i / 32)); covers scores in (-8, 0].
inline constexpr int kExpTableSize = 256;
inline constexpr int kExpTableStepLog2 = 5;  // entries per unit of score
inline constexpr int kSoftmaxWeightBits = 15;
const std::array<std::int32_t, kExpTableSize>& exp_table();

/// Softmax weights for one row of integer scores at scale 2^score_scale_exp.
/// Returns Q15 weights whose sum is within n/2 of 2^15.
std::vector<std::int32_t> q_softmax_weights(std::span<const std::int64_t> scores,
                                            int score_scale_exp);

/// Worst-case signed bit widths of the widest intermediate each kernel needs,
/// for `bits`-bit operands. The inhibitor stays near bits + log2(d) + 1; the
/// dot product needs roughly 2 * bits + log2(d).
int inhibitor_accumulator_bits(int bits, std::size_t n, std::size_t d, int gamma_shift);
int dotprod_accumulator_bits(int bits, std::size_t n, std::size_t d);

// Number of signed bits needed to hold every value in [lo, hi].
int signed_bits_for(std::int64_t lo, std::int64_t hi);

}  // namespace inhibitor
