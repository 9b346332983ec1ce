#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "ssr/operators.hpp"

using namespace ssr;

TEST_CASE("gaussian kernel values") {
  Matrix dist(2, 2);
  dist << 0.0, 1.0, 1.0, 0.0;
  const Matrix k = gaussian_kernel_basis(dist, 1.0);
  CHECK(k(0, 0) == 1.0);
  CHECK(k(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  SUBCASE("huge distances tend to the identity") {
    Matrix far(2, 2);
    far << 0.0, 1e8, 1e8, 0.0;
    const Matrix kf = gaussian_kernel_basis(far, 1.0);
    CHECK(kf(0, 1) < 1e-200);
    CHECK(kf(1, 1) == 1.0);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(gaussian_kernel_basis(dist, 0.0), std::invalid_argument);
    Matrix asym(2, 2);
    asym << 0.0, 1.0, 2.0, 0.0;
    CHECK_THROWS_AS(gaussian_kernel_basis(asym, 1.0), std::invalid_argument);
    Matrix diag(2, 2);
    diag << 1.0, 1.0, 1.0, 0.0;
    CHECK_THROWS_AS(gaussian_kernel_basis(diag, 1.0), std::invalid_argument);
  }
}

TEST_CASE("circular difference") {
  const Matrix d = circular_difference(3);
  Vector v(3);
  v << 1, 2, 3;
  Vector expect(3);
  expect << -1, -1, 2;
  CHECK(((d * v) - expect).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("constant vectors are annihilated") {
    CHECK((d * Vector::Constant(3, 4.2)).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("each row sums to zero") {
    CHECK(d.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("row pattern: one +1 and one -1 with wrap") {
    const Matrix d4 = circular_difference(4);
    for (Index i = 0; i < 4; ++i) {
      CHECK(d4(i, i) == 1.0);
      CHECK(d4(i, (i + 1) % 4) == -1.0);
    }
  }
  SUBCASE("n below 2 rejected") {
    CHECK_THROWS_AS(circular_difference(1), std::invalid_argument);
  }
  SUBCASE("l1 norm is invariant under cyclic rotation") {
    std::mt19937_64 rng(3);
    const Matrix d6 = circular_difference(6);
    const Vector w = oracle::random_vector(6, rng);
    Vector rotated(6);
    for (Index i = 0; i < 6; ++i) rotated[i] = w[(i + 2) % 6];
    CHECK((d6 * w).lpNorm<1>() ==
          doctest::Approx((d6 * rotated).lpNorm<1>()).epsilon(1e-12));
  }
}

TEST_CASE("anchored forward difference") {
  const Matrix d = forward_difference_anchored(3);
  Vector v = Vector::Constant(3, 5.0);
  Vector expect(3);
  expect << 0, 0, 5;
  CHECK(((d * v) - expect).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("degenerate size one") {
    const Matrix d1 = forward_difference_anchored(1);
    CHECK(d1(0, 0) == 1.0);
  }
  SUBCASE("unit determinant for several sizes") {
    for (Index n : {1, 2, 5, 9})
      CHECK(forward_difference_anchored(n).determinant() ==
            doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("anchored operator is injective: ||Dv||_1 = 0 iff v = 0") {
    std::mt19937_64 rng(5);
    const Matrix d5 = forward_difference_anchored(5);
    CHECK((d5 * Vector::Zero(5)).lpNorm<1>() == 0.0);
    for (int rep = 0; rep < 20; ++rep) {
      Vector w = oracle::random_vector(5, rng);
      if (w.cwiseAbs().maxCoeff() < 1e-12) continue;
      CHECK((d5 * w).lpNorm<1>() > 0.0);
    }
  }
}

TEST_CASE("projection factors") {
  std::mt19937_64 rng(7);
  SUBCASE("orthonormal basis gives H = BB'") {
    Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(4, 4, rng))
                   .householderQ();
    BasisSet mean{q, Matrix::Identity(3, 3), Matrix::Identity(2, 2),
                  BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 3, 2}, BasisRole::hotspot);
    const ProjectionFactors pf = projection_factors(mean, hot, 0.0);
    CHECK((pf.h_spatial - q * q.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((pf.p_spatial -
           (Matrix::Identity(4, 4) - q * q.transpose()) * hot.spatial)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
  SUBCASE("identity mean basis saturates: H = I") {
    BasisSet mean = BasisSet::identity({3, 4, 2}, BasisRole::mean);
    BasisSet hot = BasisSet::identity({3, 4, 2}, BasisRole::hotspot);
    const ProjectionFactors pf = projection_factors(mean, hot, 0.0);
    CHECK((pf.h_spatial - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(pf.p_weekly.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("factored H matches the dense Kronecker projection") {
    BasisSet mean{oracle::random_matrix(3, 3, rng),
                  oracle::random_matrix(4, 4, rng),
                  oracle::random_matrix(2, 2, rng), BasisRole::mean};
    BasisSet hot = BasisSet::identity({3, 4, 2}, BasisRole::hotspot);
    const ProjectionFactors pf = projection_factors(mean, hot, 0.0);
    const Matrix h_dense =
        oracle::kron3(oracle::projection(mean.spatial, 0.0),
                      oracle::projection(mean.weekly, 0.0),
                      oracle::projection(mean.yearly, 0.0));
    const Matrix h_factored =
        oracle::kron3(pf.h_spatial, pf.h_weekly, pf.h_yearly);
    CHECK((h_dense - h_factored).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("idempotence at zero ridge") {
    Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(5, 5, rng))
                   .householderQ();
    BasisSet mean{q.leftCols(5), Matrix::Identity(3, 3), Matrix::Identity(2, 2),
                  BasisRole::mean};
    BasisSet hot = BasisSet::identity({5, 3, 2}, BasisRole::hotspot);
    const ProjectionFactors pf = projection_factors(mean, hot, 0.0);
    for (int mode : {1, 2, 3})
      CHECK((pf.h(mode) * pf.h(mode) - pf.h(mode)).cwiseAbs().maxCoeff() <=
            1e-8);
  }
  SUBCASE("singular Gram without ridge is a conditioning error") {
    Matrix rank1 = Matrix::Zero(3, 3);
    rank1.col(0).setOnes();
    BasisSet mean{rank1, Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                  BasisRole::mean};
    BasisSet hot = BasisSet::identity({3, 2, 2}, BasisRole::hotspot);
    CHECK_THROWS_WITH_AS(projection_factors(mean, hot, 0.0),
                         doctest::Contains("ridge"), NumericalError);
    CHECK_NOTHROW(projection_factors(mean, hot, 1e-6));
  }
}

TEST_CASE("spectral bound") {
  SUBCASE("identity difference operators") {
    DifferenceSet d{Matrix::Identity(3, 3), Matrix::Identity(3, 3),
                    Matrix::Identity(3, 3)};
    CHECK(spectral_bound(d) == doctest::Approx(1.01).epsilon(1e-6));
  }
  SUBCASE("circulant n=4 has lambda_max exactly 4") {
    // eigenvalues of D D' are 2 - 2 cos(2 pi k / n), maximal at k = n/2
    const Matrix dw = circular_difference(4);
    const double est = gram_spectral_norm(dw);
    CHECK(est == doctest::Approx(4.0).epsilon(1e-8));
  }
  SUBCASE("product rule against a dense eigensolver") {
    std::mt19937_64 rng(11);
    const Matrix a = oracle::random_matrix(3, 3, rng);
    const Matrix b = oracle::random_matrix(4, 4, rng);
    const Matrix kron_ab = oracle::kron(a, b);
    const double dense =
        Eigen::SelfAdjointEigenSolver<Matrix>(kron_ab * kron_ab.transpose())
            .eigenvalues()
            .maxCoeff();
    const double product = gram_spectral_norm(a) * gram_spectral_norm(b);
    CHECK(product == doctest::Approx(dense).epsilon(1e-6));
  }
  SUBCASE("standard operators stay within the documented cap") {
    const DifferenceSet d = DifferenceSet::standard({50, 51, 13});
    CHECK(spectral_bound(d) <= 16.0 * 1.01 + 1e-9);
    // it really is an upper bound (dense spectrum on a small instance)
    const DifferenceSet ds = DifferenceSet::standard({2, 4, 3});
    const Matrix dsmall = oracle::kron3(ds.spatial, ds.weekly, ds.yearly);
    const double dense =
        Eigen::SelfAdjointEigenSolver<Matrix>(dsmall * dsmall.transpose())
            .eigenvalues()
            .maxCoeff();
    CHECK(spectral_bound(ds) >= dense);
  }
}

TEST_CASE("difference set shapes") {
  const DifferenceSet d = DifferenceSet::standard({3, 4, 2});
  CHECK(d.spatial.isIdentity(0.0));
  CHECK(d.weekly.rows() == 4);
  CHECK(d.yearly.rows() == 2);
  CHECK(d.yearly(1, 1) == 1.0);  // anchored last row e_n'
  CHECK(d.yearly(1, 0) == 0.0);
}

TEST_CASE("bandwidth selection returns a grid value and prefers signal scale") {
  std::mt19937_64 rng(13);
  const Index n = 12;
  Matrix dist(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      dist(i, j) = std::abs(static_cast<double>(i - j));
  // smooth spatial field: a wide kernel should reconstruct held-out units
  Matrix wide = gaussian_kernel_basis(dist, 4.0);
  Tensor3 y(n, 3, 2);
  const Matrix coef = oracle::random_matrix(n, 6, rng);
  Eigen::Map<Matrix>(y.values().data(), n, 6) = wide * coef * 0.2;
  const double c = select_bandwidth(dist, y, {0.5, 1.0, 2.0, 4.0, 8.0}, 4);
  CHECK(c >= 1.0);  // tiny bandwidths cannot interpolate a smooth field
}
