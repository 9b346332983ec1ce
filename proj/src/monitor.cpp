#include "ssr/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "parallel.hpp"
#include "window_scan.hpp"

namespace ssr {

using detail::grow_warm_starts;
using detail::parallel_for;
using detail::window_statistics;
using detail::window_view;
using detail::WindowStats;

std::uint64_t mix_seed(std::uint64_t root, std::uint64_t stream) {
  // splitmix64 over the combined word
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool lambda_less(const LambdaPair& a, const LambdaPair& b) {
  if (a.lambda1 != b.lambda1) return a.lambda1 < b.lambda1;
  return a.lambda2 < b.lambda2;
}

LambdaGrid LambdaGrid::standard() {
  LambdaGrid grid;
  for (double l1 : {0.01, 0.05, 0.1, 0.5})
    for (double l2 : {0.01, 0.1}) grid.pairs.push_back({l1, l2});
  return grid;
}

void LambdaGrid::validate() const {
  if (pairs.empty()) throw std::invalid_argument("lambda grid is empty");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].lambda1 < 0.0 || pairs[i].lambda2 < 0.0)
      throw std::invalid_argument("lambda grid entries must be >= 0");
    for (std::size_t j = i + 1; j < pairs.size(); ++j)
      if (pairs[i] == pairs[j])
        throw std::invalid_argument("lambda grid entries must be distinct");
  }
}

Pipeline Pipeline::identity(Index n1, Index n2) {
  Pipeline p;
  p.mean_spatial = Matrix::Identity(n1, n1);
  p.mean_weekly = Matrix::Identity(n2, n2);
  p.hot_spatial = Matrix::Identity(n1, n1);
  p.hot_weekly = Matrix::Identity(n2, n2);
  return p;
}

BasisSet Pipeline::mean_basis(Index years) const {
  return BasisSet{mean_spatial, mean_weekly, Matrix::Identity(years, years),
                  BasisRole::mean};
}

BasisSet Pipeline::hotspot_basis(Index years) const {
  return BasisSet{hot_spatial, hot_weekly, Matrix::Identity(years, years),
                  BasisRole::hotspot};
}

double positive_part_statistic(const Vector& h, const Vector& r) {
  if (h.size() != r.size())
    throw ShapeError("positive_part_statistic: length mismatch");
  const Vector hplus = h.cwiseMax(0.0);
  const double denom2 = hplus.squaredNorm();
  if (denom2 == 0.0) return 0.0;
  return hplus.dot(r) / std::sqrt(denom2);
}

Phase1Result phase1_calibrate(const InControlSource& source,
                              const LambdaGrid& grid, int reps,
                              const Pipeline& pipe, std::uint64_t seed,
                              int threads) {
  grid.validate();
  if (reps < 30)
    throw std::invalid_argument(
        "phase1_calibrate: need at least 30 replications for stable moments");

  const int npairs = static_cast<int>(grid.pairs.size());
  std::vector<std::vector<std::vector<double>>> per_rep(reps);

  parallel_for(reps, threads, [&](int rep) {
    const Tensor3 series = source(mix_seed(seed, rep));
    std::vector<WarmStart> warm(npairs);
    std::vector<std::vector<double>> rows;
    for (Index t = 1; t <= series.n3(); ++t) {
      grow_warm_starts(warm, series.n1(), series.n2(), t);
      const Tensor3 window = window_view(series, t);
      WindowStats ws = window_statistics(window, pipe, grid, &warm, false);
      rows.push_back(std::move(ws.p));
    }
    per_rep[rep] = std::move(rows);
  });

  long nrows = 0;
  for (const auto& rows : per_rep) nrows += static_cast<long>(rows.size());

  Phase1Result out;
  out.samples.resize(nrows, npairs);
  long r = 0;
  for (const auto& rows : per_rep)
    for (const auto& row : rows) {
      for (int g = 0; g < npairs; ++g) out.samples(r, g) = row[g];
      ++r;
    }

  out.stats.per_pair.resize(npairs);
  out.stats.n_phase1 = nrows;
  for (int g = 0; g < npairs; ++g) {
    double sum = 0.0;
    long n = 0;
    for (long i = 0; i < nrows; ++i)
      if (std::isfinite(out.samples(i, g))) {
        sum += out.samples(i, g);
        ++n;
      }
    PairStats ps;
    if (n >= 2) {
      ps.mean = sum / static_cast<double>(n);
      double ss = 0.0;
      for (long i = 0; i < nrows; ++i)
        if (std::isfinite(out.samples(i, g)))
          ss += (out.samples(i, g) - ps.mean) * (out.samples(i, g) - ps.mean);
      ps.var = ss / static_cast<double>(n - 1);
      ps.usable = ps.var > 1e-12 * std::max(1.0, ps.mean * ps.mean);
    }
    out.stats.per_pair[g] = ps;
  }

  bool any_usable = false;
  for (const auto& ps : out.stats.per_pair) any_usable |= ps.usable;
  if (any_usable) {
    out.p_tilde_pool.reserve(nrows);
    for (long i = 0; i < nrows; ++i) {
      std::vector<double> row(npairs);
      for (int g = 0; g < npairs; ++g) row[g] = out.samples(i, g);
      try {
        out.p_tilde_pool.push_back(standardized_max(row, grid, out.stats).first);
      } catch (const NumericalError&) {
        // row with no valid entries; skip
      }
    }
  }
  return out;
}

std::pair<double, LambdaPair> standardized_max(
    const std::vector<double>& p_values, const LambdaGrid& grid,
    const Phase1Stats& stats) {
  if (p_values.size() != grid.pairs.size() ||
      stats.per_pair.size() != grid.pairs.size())
    throw ShapeError("standardized_max: grid, stats and p_values sizes disagree");
  bool found = false;
  double best = -std::numeric_limits<double>::infinity();
  LambdaPair winner;
  for (std::size_t g = 0; g < grid.pairs.size(); ++g) {
    const PairStats& ps = stats.per_pair[g];
    if (!ps.usable || !std::isfinite(p_values[g])) continue;
    const double score = (p_values[g] - ps.mean) / std::sqrt(ps.var);
    if (!found || score > best ||
        (score == best && lambda_less(grid.pairs[g], winner))) {
      best = score;
      winner = grid.pairs[g];
      found = true;
    }
  }
  if (!found) throw NumericalError("standardized_max: no usable lambda pairs");
  return {best, winner};
}

CusumState cusum_update(CusumState state, double p_tilde, LambdaPair winner,
                        const CusumConfig& cfg) {
  state.w = std::max(0.0, state.w + p_tilde - cfg.allowance);
  state.t += 1;
  state.history.push_back(
      {state.t, p_tilde, winner, state.w, state.w > cfg.limit});
  return state;
}

double calibrate_limit(const StreamSource& source, double allowance,
                       double target_arl0, int reps, std::uint64_t seed,
                       int threads) {
  if (target_arl0 <= 1.0)
    throw std::invalid_argument("calibrate_limit: target_arl0 must exceed 1");
  if (reps < 1) throw std::invalid_argument("calibrate_limit: reps must be >= 1");
  const int cap = static_cast<int>(std::ceil(10.0 * target_arl0));

  std::vector<std::vector<double>> streams(reps);
  parallel_for(reps, threads, [&](int rep) {
    streams[rep] = source(mix_seed(seed, rep), cap);
    if (static_cast<int>(streams[rep].size()) != cap)
      throw std::invalid_argument("calibrate_limit: stream length mismatch");
  });

  const auto arl = [&](double limit) {
    double total = 0.0;
    for (const auto& s : streams)
      total += detail::cusum_run_length(s, allowance, limit);
    return total / static_cast<double>(reps);
  };

  double lo = 0.0;
  const double arl_lo = arl(lo);
  if (arl_lo > target_arl0)
    throw NumericalError(
        "calibrate_limit: in-control ARL at limit 0 is already " +
        std::to_string(arl_lo) + " > target " + std::to_string(target_arl0) +
        "; allowance is too large for this stream");
  double hi = 1.0;
  while (arl(hi) < target_arl0) {
    hi *= 2.0;
    if (hi > 1e12)
      throw NumericalError(
          "calibrate_limit: could not bracket the target ARL; the stream "
          "drift never accumulates past any limit");
  }
  for (int it = 0; it < 200 && (hi - lo) > 1e-10 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (arl(mid) < target_arl0)
      lo = mid;
    else
      hi = mid;
  }
  const double achieved = arl(hi);
  if (std::abs(achieved - target_arl0) > 0.1 * target_arl0)
    throw NumericalError(
        "calibrate_limit: bisection landed at ARL " + std::to_string(achieved) +
        ", outside 10% of target " + std::to_string(target_arl0) +
        "; increase reps or check the stream for drift");
  return hi;
}

StreamSource bootstrap_stream(std::vector<double> pool) {
  if (pool.empty()) throw std::invalid_argument("bootstrap_stream: empty pool");
  return [pool = std::move(pool)](std::uint64_t rep_seed, int length) {
    std::mt19937_64 rng(rep_seed);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<double> out(length);
    for (auto& x : out) x = pool[pick(rng)];
    return out;
  };
}

MonitorResult monitor_run(const Tensor3& series, const Pipeline& pipe,
                          const LambdaGrid& grid, const Phase1Stats& stats,
                          const CusumConfig& cfg,
                          const MonitorOptions& options) {
  grid.validate();
  if (stats.per_pair.size() != grid.pairs.size())
    throw ShapeError("monitor_run: phase-1 stats do not match the grid");

  MonitorResult out;
  CusumState state;
  std::vector<WarmStart> warm(grid.pairs.size());
  const Index horizon =
      options.max_years > 0 ? std::min<Index>(series.n3(), options.max_years)
                            : series.n3();
  for (Index t = 1; t <= horizon; ++t) {
    grow_warm_starts(warm, series.n1(), series.n2(), t);
    const Tensor3 window = window_view(series, t);
    WindowStats ws = window_statistics(window, pipe, grid, &warm, true);
    for (auto& w : ws.warnings) out.warnings.push_back(std::move(w));
    const auto [p_tilde, winner] = standardized_max(ws.p, grid, stats);
    state = cusum_update(std::move(state), p_tilde, winner, cfg);
    if (state.history.back().signal) {
      if (static_cast<int>(t) < options.restart_before) {
        ++out.false_alarms;
        state.w = 0.0;
        continue;
      }
      out.t_star = static_cast<int>(t);
      out.winner = winner;
      for (std::size_t g = 0; g < grid.pairs.size(); ++g)
        if (grid.pairs[g] == winner && g < ws.fits.size())
          out.winner_fit = std::move(ws.fits[g]);
      break;
    }
  }
  out.history = std::move(state.history);
  return out;
}

}  // namespace ssr
