#pragma once

#include <Eigen/Dense>

#include "ssr/errors.hpp"

namespace ssr {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dims {
  Index n1 = 0;  // spatial units
  Index n2 = 0;  // weeks
  Index n3 = 0;  // years

  Index count() const { return n1 * n2 * n3; }
  Index size(int mode) const;
  bool operator==(const Dims&) const = default;
};

/// Dense order-3 tensor in canonical vectorized order: the mode-1 index
/// runs fastest, the mode-3 index slowest, so that
///   vec(t)[k*n1*n2 + j*n1 + i] = t(i, j, k)   (0-based).
/// Under this order vec(t x1 A1 x2 A2 x3 A3) = (A3 (x) A2 (x) A1) vec(t).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Index n1, Index n2, Index n3)
      : dims_{n1, n2, n3}, values_(Vector::Zero(n1 * n2 * n3)) {
    if (n1 < 0 || n2 < 0 || n3 < 0) throw ShapeError("Tensor3: negative dimension");
  }
  Tensor3(Dims dims, Vector values) : dims_(dims), values_(std::move(values)) {
    if (values_.size() != dims_.count())
      throw ShapeError("Tensor3: values length does not match dims");
  }

  Dims dims() const { return dims_; }
  Index n1() const { return dims_.n1; }
  Index n2() const { return dims_.n2; }
  Index n3() const { return dims_.n3; }
  Index size() const { return values_.size(); }

  double operator()(Index i, Index j, Index k) const {
    return values_[k * dims_.n1 * dims_.n2 + j * dims_.n1 + i];
  }
  double& operator()(Index i, Index j, Index k) {
    return values_[k * dims_.n1 * dims_.n2 + j * dims_.n1 + i];
  }

  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

  /// Year slice as an n1 x n2 matrix (copy).
  Matrix year_slice(Index k) const;
  void set_year_slice(Index k, const Matrix& slice);

  bool same_dims(const Tensor3& other) const { return dims_ == other.dims_; }

 private:
  Dims dims_;
  Vector values_;
};

Vector vectorize(const Tensor3& t);
Tensor3 tensorize(const Vector& v, Dims dims);

/// Mode-m unfolding: rows index the mode-m fiber entries, columns enumerate
/// the remaining indices in canonical (lower mode fastest) order.
Matrix unfold(const Tensor3& t, int mode);
Tensor3 fold(const Matrix& m, int mode, Dims dims);

/// t x_mode m, contracting m's columns against the tensor's mode-m fibers.
Tensor3 mode_n_product(const Tensor3& t, const Matrix& m, int mode);

/// t x1 A1 x2 A2 x3 A3.
Tensor3 tucker_apply(const Tensor3& t, const Matrix& a1, const Matrix& a2,
                     const Matrix& a3);

}  // namespace ssr
