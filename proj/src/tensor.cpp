#include "inhibitor/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "inhibitor/errors.hpp"

namespace inhibitor {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Tensor2D: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
  }
}

Tensor2D::Tensor2D(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Tensor2D: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::string Tensor2D::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor2D Tensor2D::identity(std::size_t n) {
  Tensor2D t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

void require_shape(bool ok, const char* op, const Tensor2D& a, const Tensor2D& b) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": shape " + a.shape_str() + " vs " + b.shape_str());
  }
}

namespace {

template <typename F>
Tensor2D map(const Tensor2D& a, F f) {
  Tensor2D out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor2D zip(const char* op, const Tensor2D& a, const Tensor2D& b, F f) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), op, a, b);
  Tensor2D out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  require_shape(a.cols() == b.rows(), "matmul", a, b);
  Tensor2D out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto br = b.row(k);
      for (std::size_t j = 0; j < br.size(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
  require_shape(a.rows() == b.rows(), "matmul_tn", a, b);
  Tensor2D out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto ar = a.row(r);
    auto br = b.row(r);
    for (std::size_t i = 0; i < ar.size(); ++i) {
      const double v = ar[i];
      if (v == 0.0) continue;
      auto o = out.row(i);
      for (std::size_t j = 0; j < br.size(); ++j) o[j] += v * br[j];
    }
  }
  return out;
}

Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
  require_shape(a.cols() == b.cols(), "matmul_nt", a, b);
  Tensor2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor2D transpose(const Tensor2D& a) {
  Tensor2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor2D relu(const Tensor2D& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor2D negrelu(const Tensor2D& a) {
  return map(a, [](double x) { return x < 0.0 ? x : 0.0; });
}

Tensor2D abs(const Tensor2D& a) {
  return map(a, [](double x) { return std::fabs(x); });
}

Tensor2D softmax_rows(const Tensor2D& a) {
  Tensor2D out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double m = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - m);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Tensor2D cdist_manhattan(const Tensor2D& a, const Tensor2D& b) {
  require_shape(a.cols() == b.cols(), "cdist_manhattan", a, b);
  Tensor2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) acc += std::fabs(ar[k] - br[k]);
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor2D rowsum(const Tensor2D& a) {
  Tensor2D out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (double v : a.row(i)) acc += v;
    out(i, 0) = acc;
  }
  return out;
}

Tensor2D colsum(const Tensor2D& a) {
  Tensor2D out(1, a.cols());
  auto o = out.row(0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] += r[j];
  }
  return out;
}

Tensor2D add(const Tensor2D& a, const Tensor2D& b) {
  return zip("add", a, b, [](double x, double y) { return x + y; });
}

Tensor2D sub(const Tensor2D& a, const Tensor2D& b) {
  return zip("sub", a, b, [](double x, double y) { return x - y; });
}

Tensor2D scale(const Tensor2D& a, double factor) {
  return map(a, [factor](double x) { return x * factor; });
}

Tensor2D add_scalar(const Tensor2D& a, double value) {
  return map(a, [value](double x) { return x + value; });
}

Tensor2D add_row(const Tensor2D& a, const Tensor2D& bias) {
  require_shape(bias.rows() == 1 && bias.cols() == a.cols(), "add_row", a, bias);
  Tensor2D out = a;
  auto b = bias.row(0);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return out;
}

Tensor2D slice_cols(const Tensor2D& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + a.shape_str());
  }
  Tensor2D out(a.rows(), end - begin);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    std::copy(r.begin() + begin, r.begin() + end, out.row(i).begin());
  }
  return out;
}

Tensor2D concat_cols(std::span<const Tensor2D> parts) {
  if (parts.empty()) return {};
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_shape(p.rows() == parts[0].rows(), "concat_cols", parts[0], p);
    cols += p.cols();
  }
  Tensor2D out(parts[0].rows(), cols);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto dst = out.row(i).begin();
    for (const auto& p : parts) dst = std::copy(p.row(i).begin(), p.row(i).end(), dst);
  }
  return out;
}

Tensor2D slice_rows(const Tensor2D& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + a.shape_str());
  }
  auto src = a.data();
  return {end - begin, a.cols(),
          std::vector<double>(src.begin() + begin * a.cols(), src.begin() + end * a.cols())};
}

Tensor2D concat_rows(std::span<const Tensor2D> parts) {
  if (parts.empty()) return {};
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_shape(p.cols() == parts[0].cols(), "concat_rows", parts[0], p);
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * parts[0].cols());
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return {rows, parts[0].cols(), std::move(data)};
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

double max_abs(const Tensor2D& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::fabs(v));
  return m;
}

bool all_finite(const Tensor2D& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace inhibitor
