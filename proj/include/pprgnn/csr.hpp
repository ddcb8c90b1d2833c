#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "pprgnn/dense.hpp"
#include "pprgnn/error.hpp"

namespace pprgnn {

using Index = std::uint32_t;

template <typename T>
struct Triplet {
  Index row;
  Index col;
  T value;
};

/// Compressed-sparse-row matrix. Column indices are strictly increasing
/// within each row.
template <typename T>
class CsrMatrix {
 public:
  using value_type = T;

  CsrMatrix() : row_offsets_(1, 0) {}

  CsrMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<Index> row_offsets,
            std::vector<Index> col_indices, std::vector<T> values)
      : n_rows_(n_rows),
        n_cols_(n_cols),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        values_(std::move(values)) {
    validate();
  }

  /// Builds a canonical matrix from unordered entries; duplicates are summed.
  static CsrMatrix from_triplets(std::size_t n_rows, std::size_t n_cols,
                                 std::vector<Triplet<T>> entries) {
    for (const auto& e : entries) {
      detail::require_dims(e.row < n_rows && e.col < n_cols,
                           "CsrMatrix::from_triplets: entry out of bounds");
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    std::vector<Index> offsets(n_rows + 1, 0);
    std::vector<Index> cols;
    std::vector<T> vals;
    cols.reserve(entries.size());
    vals.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (i > 0 && entries[i - 1].row == e.row && entries[i - 1].col == e.col) {
        vals.back() += e.value;
        continue;
      }
      cols.push_back(e.col);
      vals.push_back(e.value);
      ++offsets[e.row + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    return CsrMatrix(n_rows, n_cols, std::move(offsets), std::move(cols), std::move(vals));
  }

  static CsrMatrix identity(std::size_t n) {
    std::vector<Index> offsets(n + 1);
    std::vector<Index> cols(n);
    std::iota(offsets.begin(), offsets.end(), Index{0});
    std::iota(cols.begin(), cols.end(), Index{0});
    return CsrMatrix(n, n, std::move(offsets), std::move(cols), std::vector<T>(n, T(1)));
  }

  static CsrMatrix zero(std::size_t n_rows, std::size_t n_cols) {
    return CsrMatrix(n_rows, n_cols, std::vector<Index>(n_rows + 1, 0), {}, {});
  }

  /// Drops exact zeros from a dense matrix.
  static CsrMatrix from_dense(const DenseMatrix<T>& d) {
    std::vector<Triplet<T>> entries;
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j)
        if (d(i, j) != T(0))
          entries.push_back({static_cast<Index>(i), static_cast<Index>(j), d(i, j)});
    return from_triplets(d.rows(), d.cols(), std::move(entries));
  }

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return n_cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  bool is_square() const noexcept { return n_rows_ == n_cols_; }

  const std::vector<Index>& row_offsets() const noexcept { return row_offsets_; }
  const std::vector<Index>& col_indices() const noexcept { return col_indices_; }
  const std::vector<T>& values() const noexcept { return values_; }

  /// Value at (r, c), zero when not stored.
  T at(std::size_t r, std::size_t c) const {
    const auto first = col_indices_.begin() + row_offsets_[r];
    const auto last = col_indices_.begin() + row_offsets_[r + 1];
    const auto it = std::lower_bound(first, last, static_cast<Index>(c));
    if (it == last || *it != c) return T(0);
    return values_[static_cast<std::size_t>(it - col_indices_.begin())];
  }

  DenseMatrix<T> to_dense() const {
    DenseMatrix<T> d(n_rows_, n_cols_);
    for (std::size_t i = 0; i < n_rows_; ++i)
      for (Index p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
        d(i, col_indices_[p]) = values_[p];
    return d;
  }

  CsrMatrix transposed() const {
    std::vector<Triplet<T>> entries;
    entries.reserve(nnz());
    for (std::size_t i = 0; i < n_rows_; ++i)
      for (Index p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
        entries.push_back({col_indices_[p], static_cast<Index>(i), values_[p]});
    return from_triplets(n_cols_, n_rows_, std::move(entries));
  }

  /// Exact structural and value symmetry.
  bool is_symmetric() const {
    if (!is_square()) return false;
    for (std::size_t i = 0; i < n_rows_; ++i)
      for (Index p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
        if (at(col_indices_[p], i) != values_[p]) return false;
    return true;
  }

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  void validate() const {
    detail::require_dims(row_offsets_.size() == n_rows_ + 1,
                         "CsrMatrix: row_offsets must have n_rows+1 entries");
    detail::require_dims(row_offsets_.front() == 0, "CsrMatrix: row_offsets[0] must be 0");
    detail::require_dims(row_offsets_.back() == values_.size() &&
                             col_indices_.size() == values_.size(),
                         "CsrMatrix: row_offsets[n_rows] must equal nnz");
    for (std::size_t i = 0; i < n_rows_; ++i) {
      detail::require_dims(row_offsets_[i] <= row_offsets_[i + 1],
                           "CsrMatrix: row_offsets must be non-decreasing");
      for (Index p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
        detail::require_dims(col_indices_[p] < n_cols_, "CsrMatrix: column index out of range");
        detail::require_dims(p == row_offsets_[i] || col_indices_[p - 1] < col_indices_[p],
                             "CsrMatrix: column indices must be strictly increasing per row");
      }
    }
  }

  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<Index> row_offsets_;
  std::vector<Index> col_indices_;
  std::vector<T> values_;
};

/// Y = M * X. Each output row is accumulated in stored column order.
template <typename T>
DenseMatrix<T> spmm(const CsrMatrix<T>& m, const DenseMatrix<T>& x) {
  detail::require_dims(m.n_cols() == x.rows(), "spmm: m.n_cols != rows(x)");
  DenseMatrix<T> y(m.n_rows(), x.cols());
  const auto& off = m.row_offsets();
  const auto& col = m.col_indices();
  const auto& val = m.values();
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    auto out = y.row(i);
    for (Index p = off[i]; p < off[i + 1]; ++p) {
      const T v = val[p];
      auto in = x.row(col[p]);
      for (std::size_t j = 0; j < x.cols(); ++j) out[j] += v * in[j];
    }
  }
  return y;
}

/// Y = M^T * X without materializing the transpose.
template <typename T>
DenseMatrix<T> spmm_transpose(const CsrMatrix<T>& m, const DenseMatrix<T>& x) {
  detail::require_dims(m.n_rows() == x.rows(), "spmm_transpose: m.n_rows != rows(x)");
  DenseMatrix<T> y(m.n_cols(), x.cols());
  const auto& off = m.row_offsets();
  const auto& col = m.col_indices();
  const auto& val = m.values();
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    auto in = x.row(i);
    for (Index p = off[i]; p < off[i + 1]; ++p) {
      const T v = val[p];
      auto out = y.row(col[p]);
      for (std::size_t j = 0; j < x.cols(); ++j) out[j] += v * in[j];
    }
  }
  return y;
}

/// D^{-1/2} (A [+ I]) D^{-1/2}. Zero-degree rows stay zero.
template <typename T>
CsrMatrix<T> normalize_adjacency(const CsrMatrix<T>& a, bool add_self_loops) {
  detail::require_dims(a.is_square(), "normalize_adjacency: adjacency must be square");
  for (T v : a.values())
    detail::require(!(v < T(0)), "normalize_adjacency: negative entry in adjacency");

  const std::size_t n = a.n_rows();
  std::vector<Triplet<T>> entries;
  entries.reserve(a.nnz() + (add_self_loops ? n : 0));
  const auto& off = a.row_offsets();
  for (std::size_t i = 0; i < n; ++i) {
    for (Index p = off[i]; p < off[i + 1]; ++p)
      entries.push_back({static_cast<Index>(i), a.col_indices()[p], a.values()[p]});
    if (add_self_loops) entries.push_back({static_cast<Index>(i), static_cast<Index>(i), T(1)});
  }
  auto looped = CsrMatrix<T>::from_triplets(n, n, std::move(entries));

  std::vector<T> inv_sqrt_deg(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    T deg = T(0);
    for (Index p = looped.row_offsets()[i]; p < looped.row_offsets()[i + 1]; ++p)
      deg += looped.values()[p];
    inv_sqrt_deg[i] = deg > T(0) ? T(1) / std::sqrt(deg) : T(0);
  }

  std::vector<T> vals(looped.values());
  for (std::size_t i = 0; i < n; ++i)
    for (Index p = looped.row_offsets()[i]; p < looped.row_offsets()[i + 1]; ++p)
      // product of the two scales first so (i,j) and (j,i) round identically
      vals[p] *= inv_sqrt_deg[i] * inv_sqrt_deg[looped.col_indices()[p]];

  return CsrMatrix<T>(n, n, looped.row_offsets(), looped.col_indices(), std::move(vals));
}

}  // namespace pprgnn
