#pragma once

// Internal helpers: per-mode linear operators with fast paths for the
// structured matrices that dominate the solver (identities, scaled
// identities, banded difference Grams). Not part of the public headers.

#include <utility>
#include <vector>

#include "ssr/tensor.hpp"

namespace ssr::detail {

class ModeOp {
 public:
  enum class Kind { identity, scalar, sparse, dense };

  static ModeOp wrap(Matrix m) {
    ModeOp op;
    op.rows_ = m.rows();
    op.cols_ = m.cols();
    if (m.rows() == m.cols()) {
      bool diagonal = true;
      for (Index j = 0; j < m.cols() && diagonal; ++j)
        for (Index i = 0; i < m.rows(); ++i)
          if (i != j && m(i, j) != 0.0) { diagonal = false; break; }
      if (diagonal && m.rows() > 0) {
        const double c = m(0, 0);
        bool constant = true;
        for (Index i = 1; i < m.rows(); ++i)
          if (m(i, i) != c) { constant = false; break; }
        if (constant) {
          op.kind_ = (c == 1.0) ? Kind::identity : Kind::scalar;
          op.scale_ = c;
          return op;
        }
      }
    }
    Index nnz = 0;
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i)
        if (m(i, j) != 0.0) ++nnz;
    if (nnz * 4 <= m.rows() * m.cols()) {
      op.kind_ = Kind::sparse;
      op.terms_.resize(m.rows());
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
          if (m(i, j) != 0.0) op.terms_[i].emplace_back(j, m(i, j));
      return op;
    }
    op.kind_ = Kind::dense;
    op.mat_ = std::move(m);
    return op;
  }

  Kind kind() const { return kind_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool trivial() const { return kind_ == Kind::identity; }

  // out(i, :) = sum_j m(i, j) in(j, :) applied along `mode` of t.
  Tensor3 apply(const Tensor3& t, int mode) const {
    if (cols_ != t.dims().size(mode))
      throw ShapeError("ModeOp: dimension mismatch at mode " + std::to_string(mode));
    switch (kind_) {
      case Kind::identity:
        return t;
      case Kind::scalar: {
        Tensor3 out = t;
        out.values() *= scale_;
        return out;
      }
      case Kind::dense:
        return mode_n_product(t, mat_, mode);
      case Kind::sparse:
        return apply_sparse(t, mode);
    }
    throw std::logic_error("unreachable");
  }

 private:
  Tensor3 apply_sparse(const Tensor3& t, int mode) const {
    const Dims d = t.dims();
    Dims od = d;
    (mode == 1 ? od.n1 : mode == 2 ? od.n2 : od.n3) = rows_;
    Tensor3 out(od.n1, od.n2, od.n3);
    const double* src = t.values().data();
    double* dst = out.values().data();
    if (mode == 3) {
      Eigen::Map<const Matrix> in(src, d.n1 * d.n2, d.n3);
      Eigen::Map<Matrix> o(dst, od.n1 * od.n2, od.n3);
      for (Index i = 0; i < rows_; ++i)
        for (const auto& [j, v] : terms_[i]) o.col(i) += v * in.col(j);
      return out;
    }
    if (mode == 2) {
      for (Index k = 0; k < d.n3; ++k) {
        Eigen::Map<const Matrix> in(src + k * d.n1 * d.n2, d.n1, d.n2);
        Eigen::Map<Matrix> o(dst + k * od.n1 * od.n2, od.n1, od.n2);
        for (Index i = 0; i < rows_; ++i)
          for (const auto& [j, v] : terms_[i]) o.col(i) += v * in.col(j);
      }
      return out;
    }
    Eigen::Map<const Matrix> in(src, d.n1, d.n2 * d.n3);
    Eigen::Map<Matrix> o(dst, od.n1, od.n2 * od.n3);
    for (Index i = 0; i < rows_; ++i)
      for (const auto& [j, v] : terms_[i]) o.row(i) += v * in.row(j);
    return out;
  }

  Kind kind_ = Kind::identity;
  double scale_ = 1.0;
  Index rows_ = 0, cols_ = 0;
  Matrix mat_;
  std::vector<std::vector<std::pair<Index, double>>> terms_;
};

struct TuckerOps {
  ModeOp m1, m2, m3;

  static TuckerOps wrap(const Matrix& a1, const Matrix& a2, const Matrix& a3) {
    return {ModeOp::wrap(a1), ModeOp::wrap(a2), ModeOp::wrap(a3)};
  }

  Tensor3 apply(const Tensor3& t) const {
    if (m1.trivial() && m2.trivial() && m3.trivial()) return t;
    Tensor3 out = m1.apply(t, 1);
    out = m2.apply(out, 2);
    return m3.apply(out, 3);
  }
};

}  // namespace ssr::detail
