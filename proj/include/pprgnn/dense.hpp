#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pprgnn/error.hpp"

namespace pprgnn {

/// Row-major dense matrix with value semantics.
template <typename T>
class DenseMatrix {
 public:
  using value_type = T;

  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_dims(data_.size() == rows_ * cols_,
                         "DenseMatrix: data size does not match shape");
  }

  DenseMatrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      detail::require_dims(r.size() == cols_, "DenseMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  DenseMatrix& operator+=(const DenseMatrix& o) {
    detail::require_dims(same_shape(o), "DenseMatrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& o) {
    detail::require_dims(same_shape(o), "DenseMatrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  DenseMatrix& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
  friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
  friend DenseMatrix operator*(DenseMatrix a, T s) { return a *= s; }

  bool same_shape(const DenseMatrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

  template <typename U>
  DenseMatrix<U> cast() const {
    DenseMatrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// C = A * B.
template <typename T>
DenseMatrix<T> matmul(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  detail::require_dims(a.cols() == b.rows(), "matmul: inner dimensions differ");
  DenseMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const T aip = a(i, p);
      if (aip == T(0)) continue;
      auto brow = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aip * brow[j];
    }
  }
  return c;
}

/// C = A^T * B.
template <typename T>
DenseMatrix<T> matmul_tn(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  detail::require_dims(a.rows() == b.rows(), "matmul_tn: row counts differ");
  DenseMatrix<T> c(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    auto arow = a.row(p);
    auto brow = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T api = arow[i];
      if (api == T(0)) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += api * brow[j];
    }
  }
  return c;
}

/// C = A * B^T.
template <typename T>
DenseMatrix<T> matmul_nt(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  detail::require_dims(a.cols() == b.cols(), "matmul_nt: column counts differ");
  DenseMatrix<T> c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      T acc = T(0);
      for (std::size_t p = 0; p < a.cols(); ++p) acc += arow[p] * brow[p];
      c(i, j) = acc;
    }
  }
  return c;
}

/// Adds `bias` to every row.
template <typename T>
void add_row_vector(DenseMatrix<T>& m, std::span<const T> bias) {
  detail::require_dims(bias.size() == m.cols(), "add_row_vector: width mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias[j];
  }
}

template <typename T>
std::vector<T> column_sums(const DenseMatrix<T>& m) {
  std::vector<T> s(m.cols(), T(0));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) s[j] += r[j];
  }
  return s;
}

template <typename T>
DenseMatrix<T> relu(DenseMatrix<T> m) {
  for (auto& v : m.flat()) v = v > T(0) ? v : T(0);
  return m;
}

template <typename T>
T max_abs(std::span<const T> xs) {
  T best = T(0);
  for (T v : xs) best = std::max(best, std::abs(v));
  return best;
}

template <typename T>
T max_abs(const DenseMatrix<T>& m) {
  return max_abs(m.flat());
}

template <typename T>
T max_abs_diff(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  detail::require_dims(a.same_shape(b), "max_abs_diff: shape mismatch");
  T best = T(0);
  for (std::size_t i = 0; i < a.size(); ++i)
    best = std::max(best, std::abs(a.data()[i] - b.data()[i]));
  return best;
}

template <typename T>
T frobenius_norm(const DenseMatrix<T>& m) {
  T acc = T(0);
  for (T v : m.flat()) acc += v * v;
  return std::sqrt(acc);
}

template <typename T>
bool all_finite(const DenseMatrix<T>& m) {
  return std::all_of(m.flat().begin(), m.flat().end(),
                     [](T v) { return std::isfinite(v); });
}

/// Stacks matrices with equal column counts on top of each other.
template <typename T>
DenseMatrix<T> vstack(std::span<const DenseMatrix<T>> parts) {
  std::size_t rows = 0;
  const std::size_t cols = parts.empty() ? 0 : parts.front().cols();
  for (const auto& p : parts) {
    detail::require_dims(p.cols() == cols, "vstack: column counts differ");
    rows += p.rows();
  }
  DenseMatrix<T> out(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.flat().begin(), p.flat().end(), out.data() + at * cols);
    at += p.rows();
  }
  return out;
}

/// Copies rows [begin, end) into a new matrix.
template <typename T>
DenseMatrix<T> row_slice(const DenseMatrix<T>& m, std::size_t begin, std::size_t end) {
  detail::require_dims(begin <= end && end <= m.rows(), "row_slice: range out of bounds");
  DenseMatrix<T> out(end - begin, m.cols());
  std::copy(m.data() + begin * m.cols(), m.data() + end * m.cols(), out.data());
  return out;
}

}  // namespace pprgnn
