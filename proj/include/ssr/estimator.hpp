#pragma once

#include <optional>

#include "ssr/operators.hpp"
#include "ssr/tensor.hpp"

namespace ssr {

/// Solver knobs. max_outer/max_inner cap the accelerated outer loop and the
/// dual projected-gradient loop of the fused prox; tolerances are relative
/// iterate-change thresholds. lipschitz0 <= 0 requests the automatic bound.
struct FistaConfig {
  int max_outer = 500;
  int max_inner = 200;
  double lipschitz0 = 0.0;
  double outer_tol = 1e-6;
  double inner_tol = 1e-8;
};

/// One penalized decomposition y = mu + h + residual at a (lambda1, lambda2)
/// pair. The identity holds exactly by construction.
struct ModelFit {
  Tensor3 theta_m;
  Tensor3 theta_h;
  Tensor3 mu;
  Tensor3 h;
  Tensor3 residual;
  double objective = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int iterations_used = 0;
  bool converged = false;
  bool prox_converged = true;
};

struct ProxResult {
  Tensor3 theta;
  Tensor3 dual;      // final dual iterate z, ||z||_inf <= lambda2
  bool converged = false;
  int iterations = 0;
};

/// Optional warm start for fit(); theta_h must match the target dims.
struct WarmStart {
  std::optional<Tensor3> theta_h;
};

/// Closed-form trend coefficients given hot-spot coefficients:
/// theta_m = (B_m'B_m + eps I)^{-1} B_m'(y - B_h theta_h), per mode.
Tensor3 solve_theta_m(const Tensor3& y, const Tensor3& theta_h,
                      const BasisSet& mean, const BasisSet& hotspot,
                      double ridge_scale);

/// y* = (I - H_m) y applied via the per-mode projection factors.
Tensor3 residual_transform(const Tensor3& y, const ProjectionFactors& pf);

/// Fused-penalty proximal map
///   argmin_theta 1/2 ||theta - v||^2 + lambda2 ||D theta||_1
/// solved on the box-constrained dual by projected gradient; the primal is
/// recovered as theta = v - D'z. z0, when given, seeds the dual iterate.
ProxResult prox_fused(const Tensor3& v, double lambda2, const DifferenceSet& d,
                      const FistaConfig& cfg, const Tensor3* z0 = nullptr);

/// Combined prox: soft-threshold of the fused prox,
/// sign(p) .* max(|p| - lambda1, 0) with p = prox_fused(v, lambda2).
ProxResult prox_combined(const Tensor3& v, double lambda1, double lambda2,
                         const DifferenceSet& d, const FistaConfig& cfg,
                         const Tensor3* z0 = nullptr);

/// Full decomposition at one (lambda1, lambda2): accelerated proximal
/// gradient on the reduced problem
///   min_theta 1/2 ||y* - X theta||^2 + lambda1 ||theta||_1 + lambda2 ||D theta||_1
/// with X = (I - H_m) B_h applied through per-mode factors, then the
/// closed-form trend stage. ModelFit.objective reports
/// ||residual||^2 + lambda1 ||theta_h||_1 + lambda2 ||D theta_h||_1.
ModelFit fit(const Tensor3& y, const BasisSet& mean, const BasisSet& hotspot,
             const DifferenceSet& d, double lambda1, double lambda2,
             const FistaConfig& cfg = {}, double ridge_scale = 1e-8,
             const WarmStart* warm = nullptr);

/// ||residual||^2 + lambda1 ||theta_h||_1 + lambda2 ||D theta_h||_1.
double objective_value(const ModelFit& fit, double lambda1, double lambda2,
                       const DifferenceSet& d);

}  // namespace ssr
