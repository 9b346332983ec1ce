#pragma once

#include <cstdint>
#include <vector>

#include "ssr/tensor.hpp"

namespace ssr {

enum class BasisRole { mean, hotspot };

/// Per-mode basis factors; the full basis is their Kronecker product
/// (never materialized).
struct BasisSet {
  Matrix spatial;  // n1 x n1
  Matrix weekly;   // n2 x n2
  Matrix yearly;   // n3 x n3
  BasisRole role = BasisRole::mean;

  static BasisSet identity(Dims dims, BasisRole role);
  const Matrix& factor(int mode) const;
  Dims dims() const { return {spatial.rows(), weekly.rows(), yearly.rows()}; }
};

/// Per-mode difference factors of the fused penalty ||D theta||_1 with
/// D = D_y (x) D_w (x) D_s in vectorized order.
struct DifferenceSet {
  Matrix spatial;  // identity
  Matrix weekly;   // circular first difference
  Matrix yearly;   // forward difference, anchored last row

  /// Identity / circular / anchored-forward operators for the given dims.
  static DifferenceSet standard(Dims dims);
  const Matrix& factor(int mode) const;
  Dims dims() const { return {spatial.rows(), weekly.rows(), yearly.rows()}; }
};

/// Per-mode projection factors of the trend stage. h(mode) are the factors of
/// H = B(B'B + eps I)^{-1} B' and p(mode) = (I - h(mode)) * B_hot(mode).
struct ProjectionFactors {
  Matrix h_spatial, h_weekly, h_yearly;
  Matrix p_spatial, p_weekly, p_yearly;
  double ridge_scale = 0.0;

  const Matrix& h(int mode) const;
  const Matrix& p(int mode) const;
};

/// Gaussian kernel matrix exp{-d_ij^2 / (2 c^2)} from a symmetric
/// zero-diagonal distance matrix.
Matrix gaussian_kernel_basis(const Matrix& dist, double bandwidth);

/// n x n circular first difference: (Dv)_i = v_i - v_{i+1 mod n}. Requires n >= 2.
Matrix circular_difference(Index n);

/// n x n unit upper-bidiagonal forward difference whose last row is e_n', so
/// ||Dv||_1 = sum_{i<n} |v_i - v_{i+1}| + |v_n|. Invertible for every n >= 1.
Matrix forward_difference_anchored(Index n);

/// Build the per-mode trend projections. The ridge added to each Gram matrix
/// is ridge_scale * trace(B'B) / n for that mode; ridge_scale = 0 requests the
/// exact inverse and fails on singular Gram matrices.
ProjectionFactors projection_factors(const BasisSet& mean,
                                     const BasisSet& hotspot,
                                     double ridge_scale);

/// Upper bound on lambda_max(DD') for the Kronecker-product difference
/// operator: product of per-mode power-iteration estimates, inflated by 1%.
double spectral_bound(const DifferenceSet& d);

/// Power-iteration estimate of the largest eigenvalue of the symmetric PSD
/// matrix m'm (i.e. sigma_max(m)^2).
double gram_spectral_norm(const Matrix& m, int iterations = 200);

/// Bandwidth selection for the spatial kernel by K-fold cross-validation on
/// trend-reconstruction error over held-out units. Grid defaults to 8
/// log-spaced points in [median/10, median*10] when empty.
double select_bandwidth(const Matrix& dist, const Tensor3& y,
                        std::vector<double> grid = {}, int folds = 5,
                        double ridge_scale = 1e-8, std::uint64_t seed = 0);

}  // namespace ssr
