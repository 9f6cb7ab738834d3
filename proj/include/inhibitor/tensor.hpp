#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace inhibitor {

/// Dense row-major 2-D array of doubles.
///
/// Every free function in this header is pure: inputs are taken by const
/// reference and a fresh tensor is returned.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2D(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::string shape_str() const;

  static Tensor2D zeros(std::size_t rows, std::size_t cols) { return {rows, cols, 0.0}; }
  static Tensor2D identity(std::size_t n);

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
// a^T * b and a * b^T without materializing the transpose.
Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b);
Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b);
Tensor2D transpose(const Tensor2D& a);

Tensor2D relu(const Tensor2D& a);
// min(0, x)
Tensor2D negrelu(const Tensor2D& a);
Tensor2D abs(const Tensor2D& a);

// Row-wise softmax, stabilized by subtracting each row's maximum.
Tensor2D softmax_rows(const Tensor2D& a);

/// Pairwise L1 distance: out(i, j) = sum_k |a(i, k) - b(j, k)|.
/// Accumulates one row pair at a time; never builds the rows x rows x cols
/// broadcast.
Tensor2D cdist_manhattan(const Tensor2D& a, const Tensor2D& b);

Tensor2D rowsum(const Tensor2D& a);  // rows x 1
Tensor2D colsum(const Tensor2D& a);  // 1 x cols
Tensor2D add(const Tensor2D& a, const Tensor2D& b);
Tensor2D sub(const Tensor2D& a, const Tensor2D& b);
Tensor2D scale(const Tensor2D& a, double factor);
Tensor2D add_scalar(const Tensor2D& a, double value);
// Adds a 1 x cols bias row to every row of a.
Tensor2D add_row(const Tensor2D& a, const Tensor2D& bias);

// Column slice [begin, end) and its inverse.
Tensor2D slice_cols(const Tensor2D& a, std::size_t begin, std::size_t end);
Tensor2D concat_cols(std::span<const Tensor2D> parts);
Tensor2D slice_rows(const Tensor2D& a, std::size_t begin, std::size_t end);
Tensor2D concat_rows(std::span<const Tensor2D> parts);

double max_abs_diff(const Tensor2D& a, const Tensor2D& b);
double max_abs(const Tensor2D& a);
bool all_finite(const Tensor2D& a);

// Throws DimensionError("<op>: shape AxB vs CxD") unless the predicate holds.
void require_shape(bool ok, const char* op, const Tensor2D& a, const Tensor2D& b);

}  // namespace inhibitor
