#include "ssr/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace ssr {

namespace {

const Matrix& pick(const Matrix& s, const Matrix& w, const Matrix& y, int mode) {
  if (mode == 1) return s;
  if (mode == 2) return w;
  if (mode == 3) return y;
  throw ShapeError("mode must be 1, 2 or 3");
}

}  // namespace

BasisSet BasisSet::identity(Dims dims, BasisRole role) {
  return BasisSet{Matrix::Identity(dims.n1, dims.n1),
                  Matrix::Identity(dims.n2, dims.n2),
                  Matrix::Identity(dims.n3, dims.n3), role};
}

const Matrix& BasisSet::factor(int mode) const {
  return pick(spatial, weekly, yearly, mode);
}

DifferenceSet DifferenceSet::standard(Dims dims) {
  return DifferenceSet{Matrix::Identity(dims.n1, dims.n1),
                       circular_difference(dims.n2),
                       forward_difference_anchored(dims.n3)};
}

const Matrix& DifferenceSet::factor(int mode) const {
  return pick(spatial, weekly, yearly, mode);
}

const Matrix& ProjectionFactors::h(int mode) const {
  return pick(h_spatial, h_weekly, h_yearly, mode);
}

const Matrix& ProjectionFactors::p(int mode) const {
  return pick(p_spatial, p_weekly, p_yearly, mode);
}

Matrix gaussian_kernel_basis(const Matrix& dist, double bandwidth) {
  if (bandwidth <= 0.0)
    throw std::invalid_argument("gaussian_kernel_basis: bandwidth must be > 0");
  if (dist.rows() != dist.cols())
    throw std::invalid_argument("gaussian_kernel_basis: distance matrix must be square");
  const double tol = 1e-12 * std::max(1.0, dist.cwiseAbs().maxCoeff());
  if ((dist - dist.transpose()).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("gaussian_kernel_basis: distance matrix must be symmetric");
  if (dist.diagonal().cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("gaussian_kernel_basis: distance matrix must have zero diagonal");
  if (dist.minCoeff() < -tol)
    throw std::invalid_argument("gaussian_kernel_basis: distances must be nonnegative");
  return (-dist.array().square() / (2.0 * bandwidth * bandwidth)).exp();
}

Matrix circular_difference(Index n) {
  if (n < 2)
    throw std::invalid_argument("circular_difference: need n >= 2, got " +
                                std::to_string(n));
  Matrix d = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i) d(i, (i + 1) % n) = -1.0;
  return d;
}

Matrix forward_difference_anchored(Index n) {
  if (n < 1)
    throw std::invalid_argument("forward_difference_anchored: need n >= 1");
  Matrix d = Matrix::Identity(n, n);
  for (Index i = 0; i + 1 < n; ++i) d(i, i + 1) = -1.0;
  return d;
}

namespace {

struct GramSolve {
  Matrix h;       // B (B'B + eps I)^{-1} B'
  double eps;
};

GramSolve mode_projection(const Matrix& b, double ridge_scale, int mode) {
  const Index n = b.rows();
  if (b.cols() != n)
    throw ShapeError("projection_factors: basis factor for mode " +
                     std::to_string(mode) + " must be square");
  Matrix gram = b.transpose() * b;
  const double eps = ridge_scale * gram.trace() / static_cast<double>(n);
  gram.diagonal().array() += eps;
  Eigen::LDLT<Matrix> ldlt(gram);
  const Vector diag = ldlt.vectorD();
  const double dmax = diag.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || diag.minCoeff() <= dmax * 1e-14)
    throw NumericalError(
        "projection_factors: Gram matrix for mode " + std::to_string(mode) +
        " is numerically singular; supply a positive ridge_scale");
  GramSolve out;
  out.h = b * ldlt.solve(b.transpose());
  out.eps = eps;
  return out;
}

}  // namespace

ProjectionFactors projection_factors(const BasisSet& mean,
                                     const BasisSet& hotspot,
                                     double ridge_scale) {
  if (ridge_scale < 0.0)
    throw std::invalid_argument("projection_factors: ridge_scale must be >= 0");
  if (!(mean.dims() == hotspot.dims()))
    throw ShapeError("projection_factors: mean and hotspot dims disagree");
  ProjectionFactors pf;
  pf.ridge_scale = ridge_scale;
  pf.h_spatial = mode_projection(mean.spatial, ridge_scale, 1).h;
  pf.h_weekly = mode_projection(mean.weekly, ridge_scale, 2).h;
  pf.h_yearly = mode_projection(mean.yearly, ridge_scale, 3).h;
  const Index n1 = pf.h_spatial.rows(), n2 = pf.h_weekly.rows(), n3 = pf.h_yearly.rows();
  pf.p_spatial = (Matrix::Identity(n1, n1) - pf.h_spatial) * hotspot.spatial;
  pf.p_weekly = (Matrix::Identity(n2, n2) - pf.h_weekly) * hotspot.weekly;
  pf.p_yearly = (Matrix::Identity(n3, n3) - pf.h_yearly) * hotspot.yearly;
  return pf;
}

double gram_spectral_norm(const Matrix& m, int iterations) {
  if (m.size() == 0) return 0.0;
  const Matrix gram = m.transpose() * m;
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> gauss;
  Vector v(gram.rows());
  for (Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = gram * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / norm;
    if (it > 4 && std::abs(next - lambda) <= 1e-12 * std::max(1.0, next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

double spectral_bound(const DifferenceSet& d) {
  const double ls = gram_spectral_norm(d.spatial);
  const double lw = gram_spectral_norm(d.weekly);
  const double ly = gram_spectral_norm(d.yearly);
  return 1.01 * ls * lw * ly;
}

double select_bandwidth(const Matrix& dist, const Tensor3& y,
                        std::vector<double> grid, int folds,
                        double ridge_scale, std::uint64_t seed) {
  const Index n = dist.rows();
  if (n != y.n1())
    throw ShapeError("select_bandwidth: distance matrix does not match tensor n1");
  if (folds < 2 || folds > n)
    throw std::invalid_argument("select_bandwidth: folds must be in [2, n1]");
  if (grid.empty()) {
    std::vector<double> offdiag;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) offdiag.push_back(dist(i, j));
    std::sort(offdiag.begin(), offdiag.end());
    const double med = offdiag[offdiag.size() / 2];
    for (int g = 0; g < 8; ++g)
      grid.push_back(med / 10.0 * std::pow(100.0, g / 7.0));
  }

  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  const Matrix columns = unfold(y, 1);  // n1 x (n2*n3)
  double best_c = grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double c : grid) {
    const Matrix kernel = gaussian_kernel_basis(dist, c);
    double err = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Index> hold, train;
      for (Index i = 0; i < n; ++i)
        ((static_cast<int>(i) % folds == f) ? hold : train).push_back(perm[i]);
      if (hold.empty() || train.empty()) continue;
      Matrix k_tt(train.size(), train.size());
      Matrix k_ht(hold.size(), train.size());
      for (std::size_t a = 0; a < train.size(); ++a)
        for (std::size_t b = 0; b < train.size(); ++b)
          k_tt(a, b) = kernel(train[a], train[b]);
      for (std::size_t a = 0; a < hold.size(); ++a)
        for (std::size_t b = 0; b < train.size(); ++b)
          k_ht(a, b) = kernel(hold[a], train[b]);
      const double eps =
          std::max(ridge_scale, 1e-10) * k_tt.trace() / std::max<double>(1.0, k_tt.rows());
      k_tt.diagonal().array() += eps;
      Matrix y_tr(train.size(), columns.cols());
      for (std::size_t a = 0; a < train.size(); ++a) y_tr.row(a) = columns.row(train[a]);
      const Matrix pred = k_ht * k_tt.ldlt().solve(y_tr);
      for (std::size_t a = 0; a < hold.size(); ++a)
        err += (pred.row(a) - columns.row(hold[a])).squaredNorm();
    }
    if (err < best_err) {
      best_err = err;
      best_c = c;
    }
  }
  return best_c;
}

}  // namespace ssr
