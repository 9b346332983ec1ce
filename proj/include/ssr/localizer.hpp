#pragma once

#include <vector>

#include "ssr/estimator.hpp"
#include "ssr/monitor.hpp"

namespace ssr {

/// One declared hot cell; indices are 1-based as reported externally.
struct HotspotCell {
  int state = 0;
  int week = 0;
  double magnitude = 0.0;
};

struct HotspotReport {
  int t_star = 0;  // 1-based year index
  LambdaPair winner;
  std::vector<HotspotCell> cells;  // sorted by descending magnitude
  double threshold = 0.0;
};

/// Reports the (state, week) cells whose fitted hot-spot value at year t_star
/// exceeds zero_tol (upward shifts only). zero_tol < 0 selects the default
/// 1e-8 * max|H|. Cells with equal magnitude keep (state, week) order.
HotspotReport localize(const ModelFit& fit, LambdaPair winner, int t_star,
                       double zero_tol = -1.0);

}  // namespace ssr
