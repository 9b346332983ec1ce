#include "ssr/localizer.hpp"

#include <algorithm>

namespace ssr {

HotspotReport localize(const ModelFit& fit, LambdaPair winner, int t_star,
                       double zero_tol) {
  const Tensor3& h = fit.h;
  if (t_star < 1 || t_star > h.n3())
    throw ShapeError("localize: t_star " + std::to_string(t_star) +
                     " outside horizon 1.." + std::to_string(h.n3()));
  if (zero_tol < 0.0) {
    const double hmax = h.size() > 0 ? h.values().cwiseAbs().maxCoeff() : 0.0;
    zero_tol = 1e-8 * hmax;
  }
  HotspotReport report;
  report.t_star = t_star;
  report.winner = winner;
  report.threshold = zero_tol;
  const Index k = t_star - 1;
  for (Index i = 0; i < h.n1(); ++i)
    for (Index j = 0; j < h.n2(); ++j) {
      const double v = h(i, j, k);
      if (v > zero_tol)
        report.cells.push_back({static_cast<int>(i) + 1,
                                static_cast<int>(j) + 1, v});
    }
  std::stable_sort(report.cells.begin(), report.cells.end(),
                   [](const HotspotCell& a, const HotspotCell& b) {
                     return a.magnitude > b.magnitude;
                   });
  return report;
}

}  // namespace ssr
