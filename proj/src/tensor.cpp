#include "ssr/tensor.hpp"

#include <string>

namespace ssr {

namespace {

void check_mode(int mode) {
  if (mode < 1 || mode > 3)
    throw ShapeError("mode must be 1, 2 or 3, got " + std::to_string(mode));
}

}  // namespace

Index Dims::size(int mode) const {
  check_mode(mode);
  return mode == 1 ? n1 : (mode == 2 ? n2 : n3);
}

Matrix Tensor3::year_slice(Index k) const {
  if (k < 0 || k >= dims_.n3) throw ShapeError("year_slice: index out of range");
  return Eigen::Map<const Matrix>(values_.data() + k * dims_.n1 * dims_.n2,
                                  dims_.n1, dims_.n2);
}

void Tensor3::set_year_slice(Index k, const Matrix& slice) {
  if (k < 0 || k >= dims_.n3) throw ShapeError("set_year_slice: index out of range");
  if (slice.rows() != dims_.n1 || slice.cols() != dims_.n2)
    throw ShapeError("set_year_slice: slice shape mismatch");
  Eigen::Map<Matrix>(values_.data() + k * dims_.n1 * dims_.n2, dims_.n1,
                     dims_.n2) = slice;
}

Vector vectorize(const Tensor3& t) { return t.values(); }

Tensor3 tensorize(const Vector& v, Dims dims) {
  if (v.size() != dims.count())
    throw ShapeError("tensorize: vector length " + std::to_string(v.size()) +
                     " does not match dims product " +
                     std::to_string(dims.count()));
  return Tensor3(dims, v);
}

Matrix unfold(const Tensor3& t, int mode) {
  check_mode(mode);
  const Dims d = t.dims();
  const double* p = t.values().data();
  switch (mode) {
    case 1:
      // contiguous: (n1) x (n2*n3), column-major already
      return Eigen::Map<const Matrix>(p, d.n1, d.n2 * d.n3);
    case 2: {
      Matrix out(d.n2, d.n1 * d.n3);
      for (Index k = 0; k < d.n3; ++k)
        out.middleCols(k * d.n1, d.n1) =
            Eigen::Map<const Matrix>(p + k * d.n1 * d.n2, d.n1, d.n2)
                .transpose();
      return out;
    }
    default: {
      // rows are years; column (i, j) pairs with i fastest
      return Eigen::Map<const Matrix>(p, d.n1 * d.n2, d.n3).transpose();
    }
  }
}

Tensor3 fold(const Matrix& m, int mode, Dims dims) {
  check_mode(mode);
  const Index other = dims.count() / std::max<Index>(dims.size(mode), 1);
  if (dims.count() == 0) {
    if (m.size() != 0) throw ShapeError("fold: nonempty matrix into empty dims");
    return Tensor3(dims.n1, dims.n2, dims.n3);
  }
  if (m.rows() != dims.size(mode) || m.cols() != other)
    throw ShapeError("fold: matrix shape inconsistent with dims at mode " +
                     std::to_string(mode));
  Tensor3 out(dims.n1, dims.n2, dims.n3);
  double* p = out.values().data();
  switch (mode) {
    case 1:
      Eigen::Map<Matrix>(p, dims.n1, dims.n2 * dims.n3) = m;
      break;
    case 2:
      for (Index k = 0; k < dims.n3; ++k)
        Eigen::Map<Matrix>(p + k * dims.n1 * dims.n2, dims.n1, dims.n2) =
            m.middleCols(k * dims.n1, dims.n1).transpose();
      break;
    default:
      Eigen::Map<Matrix>(p, dims.n1 * dims.n2, dims.n3) = m.transpose();
      break;
  }
  return out;
}

Tensor3 mode_n_product(const Tensor3& t, const Matrix& m, int mode) {
  check_mode(mode);
  const Dims d = t.dims();
  if (m.cols() != d.size(mode))
    throw ShapeError("mode_n_product: matrix has " + std::to_string(m.cols()) +
                     " columns but tensor mode " + std::to_string(mode) +
                     " has size " + std::to_string(d.size(mode)));
  Dims od = d;
  (mode == 1 ? od.n1 : mode == 2 ? od.n2 : od.n3) = m.rows();
  Tensor3 out(od.n1, od.n2, od.n3);
  const double* src = t.values().data();
  double* dst = out.values().data();
  switch (mode) {
    case 1:
      Eigen::Map<Matrix>(dst, od.n1, od.n2 * od.n3).noalias() =
          m * Eigen::Map<const Matrix>(src, d.n1, d.n2 * d.n3);
      break;
    case 2:
      for (Index k = 0; k < d.n3; ++k)
        Eigen::Map<Matrix>(dst + k * od.n1 * od.n2, od.n1, od.n2).noalias() =
            Eigen::Map<const Matrix>(src + k * d.n1 * d.n2, d.n1, d.n2) *
            m.transpose();
      break;
    default:
      Eigen::Map<Matrix>(dst, od.n1 * od.n2, od.n3).noalias() =
          Eigen::Map<const Matrix>(src, d.n1 * d.n2, d.n3) * m.transpose();
      break;
  }
  return out;
}

Tensor3 tucker_apply(const Tensor3& t, const Matrix& a1, const Matrix& a2,
                     const Matrix& a3) {
  return mode_n_product(mode_n_product(mode_n_product(t, a1, 1), a2, 2), a3, 3);
}

}  // namespace ssr
