#include "ssr/estimator.hpp"

#include <cmath>
#include <string>

#include "mode_ops.hpp"

namespace ssr {

namespace {

using detail::ModeOp;
using detail::TuckerOps;

Matrix gram_solve_adjoint(const Matrix& b, double ridge_scale, int mode) {
  // (B'B + eps I)^{-1} B'
  const Index n = b.rows();
  if (b.cols() != n)
    throw ShapeError("solve_theta_m: basis factor for mode " +
                     std::to_string(mode) + " must be square");
  Matrix gram = b.transpose() * b;
  gram.diagonal().array() += ridge_scale * gram.trace() / static_cast<double>(n);
  Eigen::LDLT<Matrix> ldlt(gram);
  const Vector diag = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success ||
      diag.minCoeff() <= diag.cwiseAbs().maxCoeff() * 1e-14)
    throw NumericalError("solve_theta_m: Gram matrix for mode " +
                         std::to_string(mode) +
                         " is numerically singular; supply a positive ridge_scale");
  return ldlt.solve(b.transpose());
}

void check_lambdas(double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw std::invalid_argument("penalty weights must be >= 0");
  if (!std::isfinite(lambda1) || !std::isfinite(lambda2))
    throw std::invalid_argument("penalty weights must be finite");
}

struct DiffOps {
  TuckerOps d;        // D applied per mode
  TuckerOps dt;       // D'
  TuckerOps dtd_gram; // D D' per mode (for the dual gradient)
  double lipschitz;   // bound on lambda_max(DD')

  static DiffOps build(const DifferenceSet& ds) {
    DiffOps ops;
    ops.d = TuckerOps::wrap(ds.spatial, ds.weekly, ds.yearly);
    ops.dt = TuckerOps::wrap(ds.spatial.transpose(), ds.weekly.transpose(),
                             ds.yearly.transpose());
    ops.dtd_gram = TuckerOps::wrap(ds.spatial * ds.spatial.transpose(),
                                   ds.weekly * ds.weekly.transpose(),
                                   ds.yearly * ds.yearly.transpose());
    ops.lipschitz = spectral_bound(ds);
    return ops;
  }
};

ProxResult prox_fused_core(const Tensor3& v, double lambda2,
                           const DiffOps& ops, const FistaConfig& cfg,
                           const Tensor3* z0) {
  ProxResult res;
  if (lambda2 == 0.0) {
    res.theta = v;
    res.dual = Tensor3(v.n1(), v.n2(), v.n3());
    res.converged = true;
    return res;
  }
  const double step = 1.0 / ops.lipschitz;
  Tensor3 z = z0 && z0->same_dims(v) ? *z0 : Tensor3(v.n1(), v.n2(), v.n3());
  z.values() = z.values().cwiseMax(-lambda2).cwiseMin(lambda2);
  const Tensor3 dv = ops.d.apply(v);
  res.converged = false;
  int it = 0;
  for (; it < cfg.max_inner; ++it) {
    Tensor3 grad = ops.dtd_gram.apply(z);
    grad.values() -= dv.values();
    Vector znew =
        (z.values() - step * grad.values()).cwiseMax(-lambda2).cwiseMin(lambda2);
    const double change = (znew - z.values()).norm();
    const double scale = std::max(znew.norm(), 1.0);
    z.values() = znew;
    if (change <= cfg.inner_tol * scale) {
      res.converged = true;
      ++it;
      break;
    }
  }
  res.iterations = it;
  res.theta = v;
  res.theta.values() -= ops.dt.apply(z).values();
  res.dual = std::move(z);
  return res;
}

void soft_threshold_inplace(Tensor3& t, double lambda1) {
  if (lambda1 == 0.0) return;
  t.values() = t.values().unaryExpr([lambda1](double x) {
    const double m = std::abs(x) - lambda1;
    return m > 0.0 ? (x > 0.0 ? m : -m) : 0.0;
  });
}

double l1_norm(const Tensor3& t) { return t.values().lpNorm<1>(); }

}  // namespace

Tensor3 solve_theta_m(const Tensor3& y, const Tensor3& theta_h,
                      const BasisSet& mean, const BasisSet& hotspot,
                      double ridge_scale) {
  if (!y.same_dims(theta_h))
    throw ShapeError("solve_theta_m: y and theta_h dims disagree");
  const TuckerOps bh =
      TuckerOps::wrap(hotspot.spatial, hotspot.weekly, hotspot.yearly);
  Tensor3 r = y;
  r.values() -= bh.apply(theta_h).values();
  const TuckerOps solver =
      TuckerOps::wrap(gram_solve_adjoint(mean.spatial, ridge_scale, 1),
                      gram_solve_adjoint(mean.weekly, ridge_scale, 2),
                      gram_solve_adjoint(mean.yearly, ridge_scale, 3));
  return solver.apply(r);
}

Tensor3 residual_transform(const Tensor3& y, const ProjectionFactors& pf) {
  const TuckerOps h = TuckerOps::wrap(pf.h_spatial, pf.h_weekly, pf.h_yearly);
  Tensor3 out = y;
  out.values() -= h.apply(y).values();
  return out;
}

ProxResult prox_fused(const Tensor3& v, double lambda2, const DifferenceSet& d,
                      const FistaConfig& cfg, const Tensor3* z0) {
  check_lambdas(0.0, lambda2);
  if (!(d.dims() == v.dims()))
    throw ShapeError("prox_fused: difference operators do not match tensor dims");
  return prox_fused_core(v, lambda2, DiffOps::build(d), cfg, z0);
}

ProxResult prox_combined(const Tensor3& v, double lambda1, double lambda2,
                         const DifferenceSet& d, const FistaConfig& cfg,
                         const Tensor3* z0) {
  check_lambdas(lambda1, lambda2);
  ProxResult res = prox_fused(v, lambda2, d, cfg, z0);
  soft_threshold_inplace(res.theta, lambda1);
  return res;
}

ModelFit fit(const Tensor3& y, const BasisSet& mean, const BasisSet& hotspot,
             const DifferenceSet& d, double lambda1, double lambda2,
             const FistaConfig& cfg, double ridge_scale, const WarmStart* warm) {
  check_lambdas(lambda1, lambda2);
  if (!(mean.dims() == y.dims()) || !(hotspot.dims() == y.dims()) ||
      !(d.dims() == y.dims()))
    throw ShapeError("fit: operator dims do not match data dims");

  const ProjectionFactors pf = projection_factors(mean, hotspot, ridge_scale);
  const TuckerOps hop = TuckerOps::wrap(pf.h_spatial, pf.h_weekly, pf.h_yearly);
  const TuckerOps bh =
      TuckerOps::wrap(hotspot.spatial, hotspot.weekly, hotspot.yearly);
  const TuckerOps bht =
      TuckerOps::wrap(hotspot.spatial.transpose(), hotspot.weekly.transpose(),
                      hotspot.yearly.transpose());
  const DiffOps diff = DiffOps::build(d);

  // X theta = (I - H) B_h theta;  X' r = B_h' (I - H) r  (I - H is symmetric).
  const auto apply_x = [&](const Tensor3& t) {
    Tensor3 out = bh.apply(t);
    out.values() -= hop.apply(out).values();
    return out;
  };
  const auto apply_xt = [&](const Tensor3& t) {
    Tensor3 u = t;
    u.values() -= hop.apply(t).values();
    return bht.apply(u);
  };

  Tensor3 ystar = y;
  ystar.values() -= hop.apply(y).values();

  if (lambda1 == 0.0 && lambda2 == 0.0) {
    const double hmax = std::max({(pf.h_spatial - Matrix::Identity(pf.h_spatial.rows(), pf.h_spatial.rows())).cwiseAbs().maxCoeff(),
                                  (pf.h_weekly - Matrix::Identity(pf.h_weekly.rows(), pf.h_weekly.rows())).cwiseAbs().maxCoeff(),
                                  (pf.h_yearly - Matrix::Identity(pf.h_yearly.rows(), pf.h_yearly.rows())).cwiseAbs().maxCoeff()});
    if (hmax <= 1e-6)
      throw std::invalid_argument(
          "fit: mean basis saturates model (H = I and no penalties); "
          "theta_h is unidentifiable");
  }

  double lips = cfg.lipschitz0 > 0.0
                    ? cfg.lipschitz0
                    : 1.01 * gram_spectral_norm(hotspot.spatial) *
                          gram_spectral_norm(hotspot.weekly) *
                          gram_spectral_norm(hotspot.yearly);
  if (lips <= 0.0 || !std::isfinite(lips))
    throw NumericalError("fit: invalid Lipschitz bound; supply lipschitz0");

  ModelFit out;
  out.lambda1 = lambda1;
  out.lambda2 = lambda2;

  Tensor3 theta = warm && warm->theta_h && warm->theta_h->same_dims(y)
                      ? *warm->theta_h
                      : Tensor3(y.n1(), y.n2(), y.n3());
  Tensor3 theta_prev = theta;
  Tensor3 zwarm(y.n1(), y.n2(), y.n3());
  double t_im2 = 1.0, t_im1 = 1.0;
  bool converged = false;
  bool prox_ok = true;
  int iters = 0;

  const auto half_sq = [](const Tensor3& r) { return 0.5 * r.values().squaredNorm(); };

  for (int i = 1; i <= cfg.max_outer; ++i) {
    Tensor3 eta = theta;
    const double momentum = (t_im2 - 1.0) / t_im1;
    if (momentum != 0.0)
      eta.values() += momentum * (theta.values() - theta_prev.values());

    Tensor3 resid = apply_x(eta);
    resid.values() -= ystar.values();
    const double f_eta = half_sq(resid);
    if (!std::isfinite(f_eta))
      throw NumericalError(
          "fit: objective diverged; supply a larger lipschitz0");
    const Tensor3 grad = apply_xt(resid);

    Tensor3 theta_next;
    for (int bt = 0;; ++bt) {
      Tensor3 v = eta;
      v.values() -= grad.values() / lips;
      ProxResult pr =
          prox_fused_core(v, lambda2 / lips, diff, cfg, &zwarm);
      soft_threshold_inplace(pr.theta, lambda1 / lips);
      zwarm = std::move(pr.dual);
      prox_ok = prox_ok && pr.converged;
      theta_next = std::move(pr.theta);

      Tensor3 rnew = apply_x(theta_next);
      rnew.values() -= ystar.values();
      const double f_new = half_sq(rnew);
      const Vector dvec = theta_next.values() - eta.values();
      const double model =
          f_eta + grad.values().dot(dvec) + 0.5 * lips * dvec.squaredNorm();
      if (f_new <= model + 1e-12 * std::max(1.0, std::abs(model))) break;
      if (bt >= 60)
        throw NumericalError(
            "fit: backtracking failed to certify a step; supply a larger lipschitz0");
      lips *= 2.0;
    }

    iters = i;
    const double change = (theta_next.values() - theta.values()).norm();
    const double scale = std::max(theta_next.values().norm(), 1.0);
    theta_prev = std::move(theta);
    theta = std::move(theta_next);
    const double t_i = (1.0 + std::sqrt(1.0 + 4.0 * t_im1 * t_im1)) / 2.0;
    t_im2 = t_im1;
    t_im1 = t_i;
    if (change <= cfg.outer_tol * scale) {
      converged = true;
      break;
    }
  }

  out.theta_h = std::move(theta);
  out.theta_m = solve_theta_m(y, out.theta_h, mean, hotspot, ridge_scale);
  const TuckerOps bm = TuckerOps::wrap(mean.spatial, mean.weekly, mean.yearly);
  out.mu = bm.apply(out.theta_m);
  out.h = bh.apply(out.theta_h);
  out.residual = y;
  out.residual.values() -= out.mu.values() + out.h.values();
  out.iterations_used = iters;
  out.converged = converged;
  out.prox_converged = prox_ok;
  out.objective = out.residual.values().squaredNorm() +
                  lambda1 * l1_norm(out.theta_h) +
                  lambda2 * l1_norm(diff.d.apply(out.theta_h));
  return out;
}

double objective_value(const ModelFit& fit, double lambda1, double lambda2,
                       const DifferenceSet& d) {
  check_lambdas(lambda1, lambda2);
  const Tensor3 dtheta = detail::TuckerOps::wrap(d.spatial, d.weekly, d.yearly)
                             .apply(fit.theta_h);
  return fit.residual.values().squaredNorm() + lambda1 * l1_norm(fit.theta_h) +
         lambda2 * l1_norm(dtheta);
}

}  // namespace ssr
