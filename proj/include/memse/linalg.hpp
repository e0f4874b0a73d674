#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "memse/error.hpp"

namespace memse {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Row-compressed sparsity pattern. Shared between a weight matrix and the
// conductance matrices derived from it, which always have identical structure.
struct SparsePattern {
  Index rows = 0;
  Index cols = 0;
  std::vector<Index> row_ptr{0};
  std::vector<Index> col;

  Index nnz() const { return static_cast<Index>(col.size()); }
  bool operator==(const SparsePattern&) const = default;
};

class SparseRows {
 public:
  SparseRows() : pattern_(std::make_shared<SparsePattern>()) {}

  SparseRows(std::shared_ptr<const SparsePattern> pattern, std::vector<double> values)
      : pattern_(std::move(pattern)), values_(std::move(values)) {
    if (static_cast<Index>(values_.size()) != pattern_->nnz())
      throw ShapeError("sparse value count does not match pattern");
  }

  // Dense matrix with every entry stored, zeros included.
  static SparseRows full(const Matrix& dense) {
    auto p = std::make_shared<SparsePattern>();
    p->rows = dense.rows();
    p->cols = dense.cols();
    p->row_ptr.reserve(static_cast<std::size_t>(dense.rows()) + 1);
    p->col.reserve(static_cast<std::size_t>(dense.size()));
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(dense.size()));
    for (Index i = 0; i < dense.rows(); ++i) {
      for (Index j = 0; j < dense.cols(); ++j) {
        p->col.push_back(j);
        v.push_back(dense(i, j));
      }
      p->row_ptr.push_back(p->nnz());
    }
    return SparseRows(std::move(p), std::move(v));
  }

  Index rows() const { return pattern_->rows; }
  Index cols() const { return pattern_->cols; }
  Index nnz() const { return pattern_->nnz(); }
  const SparsePattern& pattern() const { return *pattern_; }
  const std::shared_ptr<const SparsePattern>& shared_pattern() const { return pattern_; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  Index row_begin(Index r) const { return pattern_->row_ptr[static_cast<std::size_t>(r)]; }
  Index row_end(Index r) const { return pattern_->row_ptr[static_cast<std::size_t>(r) + 1]; }
  Index col_at(Index k) const { return pattern_->col[static_cast<std::size_t>(k)]; }
  double value_at(Index k) const { return values_[static_cast<std::size_t>(k)]; }

  SparseRows with_values(std::vector<double> values) const { return SparseRows(pattern_, std::move(values)); }

  Matrix to_dense() const {
    Matrix d = Matrix::Zero(rows(), cols());
    for (Index r = 0; r < rows(); ++r)
      for (Index k = row_begin(r); k < row_end(r); ++k) d(r, col_at(k)) += value_at(k);
    return d;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  bool operator==(const SparseRows& o) const {
    return (pattern_ == o.pattern_ || *pattern_ == *o.pattern_) && values_ == o.values_;
  }

 private:
  std::shared_ptr<const SparsePattern> pattern_;
  std::vector<double> values_;
};

inline void check_cols(const SparseRows& a, Index n, const char* what) {
  if (a.cols() != n) throw ShapeError(std::string(what) + ": expected length " + std::to_string(a.cols()) +
                                      ", got " + std::to_string(n));
}

inline Vector multiply(const SparseRows& a, const Vector& x) {
  check_cols(a, x.size(), "sparse multiply");
  Vector y(a.rows());
  for (Index r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (Index k = a.row_begin(r); k < a.row_end(r); ++k) s += a.value_at(k) * x[a.col_at(k)];
    y[r] = s;
  }
  return y;
}

// Per-row dot products of |values| against v: y_r = sum_k |a_rk| v_col(k).
inline Vector multiply_abs(const SparseRows& a, const Vector& v) {
  check_cols(a, v.size(), "sparse multiply");
  Vector y(a.rows());
  for (Index r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (Index k = a.row_begin(r); k < a.row_end(r); ++k) s += std::abs(a.value_at(k)) * v[a.col_at(k)];
    y[r] = s;
  }
  return y;
}

// diag(A S A^T) for symmetric S, without forming the product.
inline Vector row_quadratic(const SparseRows& a, const Matrix& s) {
  check_cols(a, s.rows(), "row quadratic");
  Vector y(a.rows());
  for (Index r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (Index k = a.row_begin(r); k < a.row_end(r); ++k) {
      const Index ck = a.col_at(k);
      double inner = 0.0;
      for (Index l = a.row_begin(r); l < a.row_end(r); ++l) inner += a.value_at(l) * s(a.col_at(l), ck);
      acc += a.value_at(k) * inner;
    }
    y[r] = acc;
  }
  return y;
}

inline bool is_diagonal(const Matrix& s) {
  for (Index j = 0; j < s.cols(); ++j)
    for (Index i = 0; i < s.rows(); ++i)
      if (i != j && s(i, j) != 0.0) return false;
  return true;
}

// diag(A D A^T) for diagonal D = diag(d).
inline Vector row_quadratic(const SparseRows& a, const Vector& d) {
  check_cols(a, d.size(), "row quadratic");
  Vector y(a.rows());
  for (Index r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (Index k = a.row_begin(r); k < a.row_end(r); ++k) acc += a.value_at(k) * a.value_at(k) * d[a.col_at(k)];
    y[r] = acc;
  }
  return y;
}

// True when no column is shared by two rows, so A D A^T stays diagonal.
inline bool disjoint_rows(const SparseRows& a) {
  std::vector<char> seen(static_cast<std::size_t>(a.cols()), 0);
  for (Index k = 0; k < a.nnz(); ++k) {
    auto& s = seen[static_cast<std::size_t>(a.col_at(k))];
    if (s) return false;
    s = 1;
  }
  return true;
}

// A diag(d) A^T, summing over shared columns only.
inline Matrix sandwich(const SparseRows& a, const Vector& d) {
  check_cols(a, d.size(), "sandwich");
  const Index m = a.rows();
  Matrix out = Matrix::Zero(m, m);
  std::vector<std::vector<std::pair<Index, double>>> by_col(static_cast<std::size_t>(a.cols()));
  for (Index r = 0; r < m; ++r)
    for (Index k = a.row_begin(r); k < a.row_end(r); ++k)
      by_col[static_cast<std::size_t>(a.col_at(k))].emplace_back(r, a.value_at(k));
  for (Index c = 0; c < a.cols(); ++c) {
    const double dc = d[c];
    if (dc == 0.0) continue;
    const auto& entries = by_col[static_cast<std::size_t>(c)];
    for (const auto& [ri, vi] : entries)
      for (const auto& [rj, vj] : entries)
        if (rj >= ri) out(ri, rj) += vi * dc * vj;
  }
  out.triangularView<Eigen::StrictlyLower>() = out.transpose().triangularView<Eigen::StrictlyLower>();
  return out;
}

// A S A^T for symmetric S. The result is exactly symmetric.
inline Matrix sandwich(const SparseRows& a, const Matrix& s) {
  check_cols(a, s.rows(), "sandwich");
  if (is_diagonal(s)) return sandwich(a, Vector(s.diagonal()));
  const Index m = a.rows();
  Matrix out(m, m);
  // t.col(r) = S * a_r^T, then out(r', r) = a_r' . t.col(r)
  Matrix t(s.rows(), m);
  for (Index r = 0; r < m; ++r) {
    auto col = t.col(r);
    col.setZero();
    for (Index k = a.row_begin(r); k < a.row_end(r); ++k) col.noalias() += a.value_at(k) * s.col(a.col_at(k));
  }
  for (Index r = 0; r < m; ++r) {
    const auto tc = t.col(r);
    for (Index rp = 0; rp <= r; ++rp) {
      double acc = 0.0;
      for (Index k = a.row_begin(rp); k < a.row_end(rp); ++k) acc += a.value_at(k) * tc[a.col_at(k)];
      out(rp, r) = acc;
    }
  }
  out.triangularView<Eigen::StrictlyLower>() = out.transpose().triangularView<Eigen::StrictlyLower>();
  return out;
}

}  // namespace memse
