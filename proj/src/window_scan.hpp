#pragma once

// Internal helpers shared by monitoring, phase-1 calibration and the
// Shewhart ablation: growing-window fits with per-pair warm starts.

#include <limits>
#include <string>
#include <vector>

#include "ssr/monitor.hpp"

namespace ssr::detail {

inline Tensor3 window_view(const Tensor3& series, Index years) {
  Tensor3 out(series.n1(), series.n2(), years);
  out.values() = series.values().head(series.n1() * series.n2() * years);
  return out;
}

/// Per-pair raw statistics for one window; p entries are NaN for pairs whose
/// fit failed.
struct WindowStats {
  std::vector<double> p;
  std::vector<std::string> warnings;
  std::vector<ModelFit> fits;  // populated only when keep_fits is set
};

inline WindowStats window_statistics(const Tensor3& window,
                                     const Pipeline& pipe,
                                     const LambdaGrid& grid,
                                     std::vector<WarmStart>* warm,
                                     bool keep_fits) {
  const Index t = window.n3();
  const BasisSet mean = pipe.mean_basis(t);
  const BasisSet hot = pipe.hotspot_basis(t);
  const DifferenceSet diffs = DifferenceSet::standard(window.dims());
  double scale = 1.0;
  if (pipe.scale_lambda) {
    const ProjectionFactors pf =
        projection_factors(mean, hot, pipe.ridge_scale);
    const Tensor3 ystar = residual_transform(window, pf);
    scale = ystar.values().cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) scale = 1.0;
  }

  WindowStats out;
  out.p.assign(grid.pairs.size(), std::numeric_limits<double>::quiet_NaN());
  if (keep_fits) out.fits.resize(grid.pairs.size());
  for (std::size_t g = 0; g < grid.pairs.size(); ++g) {
    const LambdaPair pair = grid.pairs[g];
    try {
      const WarmStart* ws = warm ? &(*warm)[g] : nullptr;
      ModelFit mf = fit(window, mean, hot, diffs, pair.lambda1 * scale,
                        pair.lambda2 * scale, pipe.fista, pipe.ridge_scale, ws);
      const Index k = t - 1;
      const Vector h_t = mf.h.year_slice(k).reshaped();
      const Vector r_t = (window.year_slice(k) - mf.mu.year_slice(k)).reshaped();
      out.p[g] = positive_part_statistic(h_t, r_t);
      if (warm) (*warm)[g].theta_h = mf.theta_h;
      if (keep_fits) out.fits[g] = std::move(mf);
    } catch (const std::exception& e) {
      out.warnings.push_back("pair (" + std::to_string(pair.lambda1) + ", " +
                             std::to_string(pair.lambda2) + ") at t=" +
                             std::to_string(t) + " skipped: " + e.what());
    }
  }
  return out;
}

/// Zero-pads each warm start with one extra year so it matches a window of
/// `years` slices.
inline void grow_warm_starts(std::vector<WarmStart>& warm, Index n1, Index n2,
                             Index years) {
  for (auto& ws : warm) {
    Tensor3 grown(n1, n2, years);
    if (ws.theta_h && ws.theta_h->n3() == years - 1)
      grown.values().head(n1 * n2 * (years - 1)) = ws.theta_h->values();
    ws.theta_h = std::move(grown);
  }
}

inline int cusum_run_length(const std::vector<double>& stream, double allowance,
                            double limit) {
  double w = 0.0;
  for (std::size_t t = 0; t < stream.size(); ++t) {
    w = std::max(0.0, w + stream[t] - allowance);
    if (w > limit) return static_cast<int>(t) + 1;
  }
  return static_cast<int>(stream.size());
}

}  // namespace ssr::detail
