#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "ssr/estimator.hpp"

using namespace ssr;

namespace {

Tensor3 random_tensor(Index n1, Index n2, Index n3, std::mt19937_64& rng) {
  return tensorize(oracle::random_vector(n1 * n2 * n3, rng), {n1, n2, n3});
}

FistaConfig tight_config() {
  FistaConfig cfg;
  cfg.max_outer = 20000;
  cfg.max_inner = 50000;
  cfg.outer_tol = 1e-12;
  cfg.inner_tol = 1e-12;
  return cfg;
}

Matrix kernel_like(Index n, double bandwidth) {
  Matrix dist(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      dist(i, j) = std::abs(static_cast<double>(i - j));
  return gaussian_kernel_basis(dist, bandwidth);
}

}  // namespace

TEST_CASE("solve_theta_m") {
  std::mt19937_64 rng(3);
  SUBCASE("identity mean basis returns y - B_h theta_h") {
    const Tensor3 y = random_tensor(3, 4, 2, rng);
    const Tensor3 th = random_tensor(3, 4, 2, rng);
    BasisSet mean = BasisSet::identity({3, 4, 2}, BasisRole::mean);
    BasisSet hot = BasisSet::identity({3, 4, 2}, BasisRole::hotspot);
    const Tensor3 tm = solve_theta_m(y, th, mean, hot, 0.0);
    CHECK((tm.values() - (y.values() - th.values())).cwiseAbs().maxCoeff() <
          1e-12);
  }
  SUBCASE("orthonormal basis with zero hot-spot is the adjoint") {
    Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(4, 4, rng))
                   .householderQ();
    const Tensor3 y = random_tensor(4, 3, 2, rng);
    BasisSet mean{q, Matrix::Identity(3, 3), Matrix::Identity(2, 2),
                  BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 3, 2}, BasisRole::hotspot);
    const Tensor3 tm =
        solve_theta_m(y, Tensor3(4, 3, 2), mean, hot, 0.0);
    const Tensor3 expect = tucker_apply(y, q.transpose(), Matrix::Identity(3, 3),
                                        Matrix::Identity(2, 2));
    CHECK((tm.values() - expect.values()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("matches the dense normal-equations oracle") {
    const Tensor3 y = random_tensor(3, 4, 2, rng);
    const Tensor3 th = random_tensor(3, 4, 2, rng);
    BasisSet mean{oracle::random_matrix(3, 3, rng),
                  oracle::random_matrix(4, 4, rng),
                  oracle::random_matrix(2, 2, rng), BasisRole::mean};
    BasisSet hot{oracle::random_matrix(3, 3, rng),
                 oracle::random_matrix(4, 4, rng),
                 oracle::random_matrix(2, 2, rng), BasisRole::hotspot};
    const Tensor3 tm = solve_theta_m(y, th, mean, hot, 0.0);
    const Matrix bm = oracle::kron3(mean.spatial, mean.weekly, mean.yearly);
    const Matrix bh = oracle::kron3(hot.spatial, hot.weekly, hot.yearly);
    const Vector rhs = bm.transpose() * (vectorize(y) - bh * vectorize(th));
    const Vector dense = (bm.transpose() * bm).ldlt().solve(rhs);
    CHECK((vectorize(tm) - dense).cwiseAbs().maxCoeff() < 1e-8);
    // least-squares gradient vanishes at the solution
    const Vector grad =
        bm.transpose() * (bm * vectorize(tm) + bh * vectorize(th) - vectorize(y));
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-6 * vectorize(y).norm());
  }
}

TEST_CASE("residual_transform") {
  std::mt19937_64 rng(5);
  SUBCASE("identity mean basis gives y* = 0") {
    BasisSet mean = BasisSet::identity({3, 4, 2}, BasisRole::mean);
    BasisSet hot = BasisSet::identity({3, 4, 2}, BasisRole::hotspot);
    const ProjectionFactors pf = projection_factors(mean, hot, 0.0);
    const Tensor3 y = random_tensor(3, 4, 2, rng);
    CHECK(residual_transform(y, pf).values().cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("annihilates the basis range and is idempotent") {
    Matrix full_q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(4, 4, rng))
                        .householderQ();
    Matrix q = full_q.leftCols(2);
    Matrix basis(4, 4);
    basis.setZero();
    basis.leftCols(2) = q;  // rank-2 spatial trend, needs a ridge
    BasisSet mean{basis, Matrix::Identity(3, 3), Matrix::Identity(2, 2),
                  BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 3, 2}, BasisRole::hotspot);
    const ProjectionFactors pf = projection_factors(mean, hot, 1e-10);
    // weekly/yearly mean bases are identity, so range membership along the
    // spatial mode alone puts the tensor in the range of H_m
    Tensor3 in_range = tucker_apply(random_tensor(4, 3, 2, rng), q * q.transpose(),
                                    Matrix::Identity(3, 3), Matrix::Identity(2, 2));
    CHECK(residual_transform(in_range, pf).values().cwiseAbs().maxCoeff() <
          1e-6);
    const Tensor3 y = random_tensor(4, 3, 2, rng);
    const Tensor3 once = residual_transform(y, pf);
    const Tensor3 twice = residual_transform(once, pf);
    CHECK((twice.values() - once.values()).cwiseAbs().maxCoeff() <=
          1e-8 * y.values().norm());
  }
  SUBCASE("matches the dense Kronecker residual projector") {
    BasisSet mean{kernel_like(3, 2.0), oracle::random_matrix(4, 4, rng),
                  Matrix::Identity(2, 2), BasisRole::mean};
    BasisSet hot = BasisSet::identity({3, 4, 2}, BasisRole::hotspot);
    const ProjectionFactors pf = projection_factors(mean, hot, 1e-8);
    const Tensor3 y = random_tensor(3, 4, 2, rng);
    const Matrix h_dense = oracle::kron3(pf.h_spatial, pf.h_weekly, pf.h_yearly);
    const Vector dense = vectorize(y) - h_dense * vectorize(y);
    CHECK((vectorize(residual_transform(y, pf)) - dense).cwiseAbs().maxCoeff() <
          1e-10);
  }
}

TEST_CASE("prox_fused") {
  std::mt19937_64 rng(7);
  SUBCASE("zero penalty is the identity") {
    const Tensor3 v = random_tensor(3, 4, 2, rng);
    const DifferenceSet d = DifferenceSet::standard(v.dims());
    const ProxResult r = prox_fused(v, 0.0, d, {});
    CHECK(r.converged);
    CHECK((r.theta.values() - v.values()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("anchored shrinkage of a constant tensor resolves to 11/6") {
    // shape (1,1,3): only D_y is active, with lambda2 = 0.5 on an all-2 input
    // the oracle gives the constant vector 11/6 (differences stay zero; the
    // anchor row shrinks the common level by lambda2/1.5 at the optimum).
    Tensor3 v(1, 1, 3);
    v.values().setConstant(2.0);
    DifferenceSet d{Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                    forward_difference_anchored(3)};
    const ProxResult r = prox_fused(v, 0.5, d, tight_config());
    // independent dense-dual oracle
    const Matrix dfull = oracle::kron3(d.spatial, d.weekly, d.yearly);
    const Vector dense = oracle::prox_fused_dense(vectorize(v), 0.5, dfull);
    CHECK((vectorize(r.theta) - dense).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(dense[0] == doctest::Approx(11.0 / 6.0).epsilon(1e-8));
    CHECK(dense[1] == doctest::Approx(11.0 / 6.0).epsilon(1e-8));
    CHECK(dense[2] == doctest::Approx(11.0 / 6.0).epsilon(1e-8));
  }
  SUBCASE("1-D chain agrees with the exact TV oracle") {
    Vector v(6);
    v << 0, 0, 5, 5, 0, 0;
    // pure chain differences: anchored operator minus its last row
    Matrix chain = Matrix::Zero(5, 6);
    for (Index i = 0; i < 5; ++i) {
      chain(i, i) = 1.0;
      chain(i, i + 1) = -1.0;
    }
    const Vector condat = oracle::tv1d_condat(v, 1.0);
    const Vector dual = oracle::prox_fused_dense(v, 1.0, chain);
    CHECK((condat - dual).cwiseAbs().maxCoeff() < 1e-8);
    // fused segments shrink toward each other
    CHECK(condat[2] < 5.0);
    CHECK(condat[1] > 0.0);
  }
  SUBCASE("dual certificate on random instances") {
    for (int rep = 0; rep < 10; ++rep) {
      const Tensor3 v = random_tensor(2, 3, 2, rng);
      const DifferenceSet d = DifferenceSet::standard(v.dims());
      const double l2 = 0.3;
      const ProxResult r = prox_fused(v, l2, d, tight_config());
      CHECK(r.converged);
      CHECK(r.dual.values().cwiseAbs().maxCoeff() <= l2 + 1e-12);
      const Matrix dfull = oracle::kron3(d.spatial, d.weekly, d.yearly);
      // theta - v + D'z = 0 by construction; optimality via the dense oracle
      const Vector dense = oracle::prox_fused_dense(vectorize(v), l2, dfull);
      CHECK((vectorize(r.theta) - dense).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
  SUBCASE("non-convergence is flagged, not silent") {
    FistaConfig starved;
    starved.max_inner = 1;
    starved.inner_tol = 1e-16;
    const Tensor3 v = random_tensor(2, 3, 2, rng);
    const DifferenceSet d = DifferenceSet::standard(v.dims());
    const ProxResult r = prox_fused(v, 0.5, d, starved);
    CHECK_FALSE(r.converged);
  }
}

TEST_CASE("prox_combined") {
  std::mt19937_64 rng(11);
  SUBCASE("lambda1 = 0 equals prox_fused") {
    const Tensor3 v = random_tensor(2, 3, 2, rng);
    const DifferenceSet d = DifferenceSet::standard(v.dims());
    const ProxResult a = prox_combined(v, 0.0, 0.4, d, tight_config());
    const ProxResult b = prox_fused(v, 0.4, d, tight_config());
    CHECK((a.theta.values() - b.theta.values()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("lambda2 = 0 is the soft-threshold closed form") {
    Tensor3 v(3, 1, 1);
    v.values() << 2.0, -0.5, 0.0;
    const DifferenceSet d = DifferenceSet::standard(v.dims());
    const ProxResult r = prox_combined(v, 1.0, 0.0, d, {});
    Vector expect(3);
    expect << 1.0, 0.0, 0.0;
    CHECK((r.theta.values() - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("large lambda1 gives total shrinkage") {
    const Tensor3 v = random_tensor(2, 3, 2, rng);
    const DifferenceSet d = DifferenceSet::standard(v.dims());
    const ProxResult base = prox_fused(v, 0.2, d, tight_config());
    const double big = base.theta.values().cwiseAbs().maxCoeff() + 1.0;
    const ProxResult r = prox_combined(v, big, 0.2, d, tight_config());
    CHECK(r.theta.values().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("subgradient optimality certificate on small instances") {
    for (int rep = 0; rep < 8; ++rep) {
      const Tensor3 v = random_tensor(2, 2, 2, rng);
      const DifferenceSet d = DifferenceSet::standard(v.dims());
      const double l1 = 0.15, l2 = 0.25;
      const ProxResult r = prox_combined(v, l1, l2, d, tight_config());
      const Matrix dfull = oracle::kron3(d.spatial, d.weekly, d.yearly);
      const double kkt = oracle::combined_kkt_residual(
          vectorize(r.theta), vectorize(v), l1, l2, dfull);
      CHECK(kkt < 1e-6);
    }
  }
}

TEST_CASE("gradient of the reduced objective matches finite differences") {
  std::mt19937_64 rng(13);
  BasisSet mean{kernel_like(3, 1.5), Matrix::Identity(3, 3),
                Matrix::Identity(3, 3), BasisRole::mean};
  BasisSet hot = BasisSet::identity({3, 3, 3}, BasisRole::hotspot);
  const ProjectionFactors pf = projection_factors(mean, hot, 1e-6);
  const Matrix h_dense = oracle::kron3(pf.h_spatial, pf.h_weekly, pf.h_yearly);
  const Matrix x_dense =
      (Matrix::Identity(27, 27) - h_dense) *
      oracle::kron3(hot.spatial, hot.weekly, hot.yearly);
  const Tensor3 y = random_tensor(3, 3, 3, rng);
  const Vector ystar = vectorize(residual_transform(y, pf));

  const auto f = [&](const Vector& th) {
    return 0.5 * (x_dense * th - ystar).squaredNorm();
  };
  for (int rep = 0; rep < 20; ++rep) {
    const Vector theta = oracle::random_vector(27, rng);
    // factored gradient: X'(X theta - y*) via per-mode operators
    Tensor3 tt = tensorize(theta, {3, 3, 3});
    Tensor3 xt = tucker_apply(tt, hot.spatial, hot.weekly, hot.yearly);
    Tensor3 hxt = tucker_apply(xt, pf.h_spatial, pf.h_weekly, pf.h_yearly);
    xt.values() -= hxt.values();
    xt.values() -= ystar;
    Tensor3 back = xt;
    back.values() -=
        tucker_apply(xt, pf.h_spatial, pf.h_weekly, pf.h_yearly).values();
    const Vector grad = vectorize(tucker_apply(
        back, hot.spatial.transpose(), hot.weekly.transpose(),
        hot.yearly.transpose()));

    Vector fd(27);
    const double h = 1e-5;
    for (Index i = 0; i < 27; ++i) {
      Vector up = theta, dn = theta;
      up[i] += h;
      dn[i] -= h;
      fd[i] = (f(up) - f(dn)) / (2.0 * h);
    }
    CHECK((fd - grad).norm() <= 1e-5 * std::max(1.0, grad.norm()));
  }
}

TEST_CASE("fit") {
  std::mt19937_64 rng(17);
  SUBCASE("zero data gives a zero fit with zero objective") {
    BasisSet mean{kernel_like(4, 2.0), Matrix::Identity(5, 5),
                  Matrix::Identity(3, 3), BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 5, 3}, BasisRole::hotspot);
    const DifferenceSet d = DifferenceSet::standard({4, 5, 3});
    const ModelFit mf = fit(Tensor3(4, 5, 3), mean, hot, d, 0.1, 0.1, {});
    CHECK(mf.theta_h.values().cwiseAbs().maxCoeff() == 0.0);
    CHECK(mf.objective == doctest::Approx(0.0));
    CHECK(mf.converged);
  }
  SUBCASE("saturated mean basis with no penalties is guarded") {
    BasisSet mean = BasisSet::identity({3, 4, 2}, BasisRole::mean);
    BasisSet hot = BasisSet::identity({3, 4, 2}, BasisRole::hotspot);
    const DifferenceSet d = DifferenceSet::standard({3, 4, 2});
    const Tensor3 y = random_tensor(3, 4, 2, rng);
    CHECK_THROWS_WITH_AS(fit(y, mean, hot, d, 0.0, 0.0, {}, 0.0),
                         doctest::Contains("saturates"), std::invalid_argument);
  }
  SUBCASE("decomposition identity holds exactly") {
    BasisSet mean{kernel_like(4, 2.0), Matrix::Identity(5, 5),
                  Matrix::Identity(3, 3), BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 5, 3}, BasisRole::hotspot);
    const DifferenceSet d = DifferenceSet::standard({4, 5, 3});
    const Tensor3 y = random_tensor(4, 5, 3, rng);
    const ModelFit mf = fit(y, mean, hot, d, 0.2, 0.1, {}, 1e-6);
    const Vector recon = mf.mu.values() + mf.h.values() + mf.residual.values();
    CHECK((recon - y.values()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(mf.objective ==
          doctest::Approx(objective_value(mf, 0.2, 0.1, d)).epsilon(1e-8));
  }
  SUBCASE("objective never exceeds the zero fit") {
    BasisSet mean{kernel_like(4, 2.0), Matrix::Identity(3, 3),
                  Matrix::Identity(2, 2), BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 3, 2}, BasisRole::hotspot);
    const DifferenceSet d = DifferenceSet::standard({4, 3, 2});
    const Tensor3 y = random_tensor(4, 3, 2, rng);
    const ModelFit mf = fit(y, mean, hot, d, 0.3, 0.2, {}, 1e-6);
    const Tensor3 tm0 = solve_theta_m(y, Tensor3(4, 3, 2), mean, hot, 1e-6);
    const Tensor3 mu0 = tucker_apply(tm0, mean.spatial, mean.weekly, mean.yearly);
    const double zero_objective = (y.values() - mu0.values()).squaredNorm();
    CHECK(mf.objective <= zero_objective + 1e-10);
  }
  SUBCASE("agrees with the dense reference solver across a lambda grid") {
    BasisSet mean{kernel_like(4, 3.0), Matrix::Identity(5, 5),
                  Matrix::Identity(3, 3), BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 5, 3}, BasisRole::hotspot);
    const DifferenceSet d = DifferenceSet::standard({4, 5, 3});
    const Tensor3 y = random_tensor(4, 5, 3, rng);
    const double ridge = 1e-6;
    const ProjectionFactors pf = projection_factors(mean, hot, ridge);
    const Matrix h_dense = oracle::kron3(pf.h_spatial, pf.h_weekly, pf.h_yearly);
    const Matrix x_dense = (Matrix::Identity(60, 60) - h_dense) *
                           oracle::kron3(hot.spatial, hot.weekly, hot.yearly);
    const Vector ystar = vectorize(residual_transform(y, pf));
    const Matrix dfull = oracle::kron3(d.spatial, d.weekly, d.yearly);

    for (double l1 : {0.05, 0.2})
      for (double l2 : {0.05, 0.2}) {
        FistaConfig cfg = tight_config();
        cfg.max_outer = 4000;
        cfg.outer_tol = 1e-10;
        cfg.max_inner = 4000;
        cfg.inner_tol = 1e-11;
        const ModelFit mf = fit(y, mean, hot, d, l1, l2, cfg, ridge);
        const Vector ref =
            oracle::dense_reference_solver(x_dense, ystar, l1, l2, dfull, 6000);
        const double obj_ref =
            oracle::dense_objective(x_dense, ystar, ref, l1, l2, dfull);
        const double obj_fit =
            oracle::dense_objective(x_dense, ystar, vectorize(mf.theta_h), l1,
                                    l2, dfull);
        CHECK(obj_fit <=
              obj_ref + 1e-4 * std::max(1.0, std::abs(obj_ref)));
        CHECK(std::abs(obj_fit - obj_ref) <=
              1e-4 * std::max(1.0, std::abs(obj_ref)));
      }
  }
  SUBCASE("shrinkage is monotone along a lambda1 ladder") {
    BasisSet mean{kernel_like(4, 2.0), Matrix::Identity(4, 4),
                  Matrix::Identity(2, 2), BasisRole::mean};
    BasisSet hot = BasisSet::identity({4, 4, 2}, BasisRole::hotspot);
    const DifferenceSet d = DifferenceSet::standard({4, 4, 2});
    const Tensor3 y = random_tensor(4, 4, 2, rng);
    FistaConfig cfg;
    cfg.max_outer = 3000;
    cfg.outer_tol = 1e-10;
    double prev = std::numeric_limits<double>::infinity();
    for (double l1 : {0.01, 0.05, 0.1, 0.5, 1.0, 2.0}) {
      const ModelFit mf = fit(y, mean, hot, d, l1, 0.05, cfg, 1e-6);
      const double norm = mf.theta_h.values().lpNorm<1>();
      CHECK(norm <= prev + 1e-7);
      prev = norm;
    }
  }
  SUBCASE("warm starts do not change the fixed point") {
    BasisSet mean{kernel_like(3, 2.0), Matrix::Identity(3, 3),
                  Matrix::Identity(2, 2), BasisRole::mean};
    BasisSet hot = BasisSet::identity({3, 3, 2}, BasisRole::hotspot);
    const DifferenceSet d = DifferenceSet::standard({3, 3, 2});
    const Tensor3 y = random_tensor(3, 3, 2, rng);
    FistaConfig cfg = tight_config();
    cfg.max_outer = 3000;
    const ModelFit cold = fit(y, mean, hot, d, 0.1, 0.05, cfg, 1e-6);
    WarmStart warm;
    warm.theta_h = random_tensor(3, 3, 2, rng);
    const ModelFit warmed = fit(y, mean, hot, d, 0.1, 0.05, cfg, 1e-6, &warm);
    CHECK((cold.theta_h.values() - warmed.theta_h.values())
              .cwiseAbs()
              .maxCoeff() < 1e-6);
  }
}

TEST_CASE("objective_value") {
  std::mt19937_64 rng(19);
  BasisSet mean{kernel_like(3, 2.0), Matrix::Identity(3, 3),
                Matrix::Identity(2, 2), BasisRole::mean};
  BasisSet hot = BasisSet::identity({3, 3, 2}, BasisRole::hotspot);
  const DifferenceSet d = DifferenceSet::standard({3, 3, 2});
  const Tensor3 y = random_tensor(3, 3, 2, rng);
  const ModelFit mf = fit(y, mean, hot, d, 0.2, 0.1, {}, 1e-6);

  SUBCASE("matches a term-by-term dense recomputation") {
    const Matrix dfull = oracle::kron3(d.spatial, d.weekly, d.yearly);
    const double direct = mf.residual.values().squaredNorm() +
                          0.2 * vectorize(mf.theta_h).lpNorm<1>() +
                          0.1 * (dfull * vectorize(mf.theta_h)).lpNorm<1>();
    CHECK(objective_value(mf, 0.2, 0.1, d) ==
          doctest::Approx(direct).epsilon(1e-12));
  }
  SUBCASE("penalty term scales linearly in lambda") {
    const double base = objective_value(mf, 0.0, 0.1, d);
    const double one = objective_value(mf, 0.2, 0.1, d);
    const double two = objective_value(mf, 0.4, 0.1, d);
    CHECK(two - one == doctest::Approx(one - base).epsilon(1e-9));
  }
}
