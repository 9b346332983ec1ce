#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssr/estimator.hpp"

namespace ssr {

/// Deterministic seed splitting for independent replication streams.
std::uint64_t mix_seed(std::uint64_t root, std::uint64_t stream);

struct LambdaPair {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool operator==(const LambdaPair&) const = default;
};

/// Lexicographic (lambda1, lambda2) order; used for deterministic tie-breaks.
bool lambda_less(const LambdaPair& a, const LambdaPair& b);

struct LambdaGrid {
  std::vector<LambdaPair> pairs;

  /// lambda1 in {0.01, 0.05, 0.1, 0.5} x lambda2 in {0.01, 0.1}; entries are
  /// multiplied by ||y*||_inf of the fitted window when Pipeline.scale_lambda
  /// is set.
  static LambdaGrid standard();
  void validate() const;  // non-empty, distinct
};

struct PairStats {
  double mean = 0.0;
  double var = 0.0;
  bool usable = false;
};

/// Pooled in-control moments of the raw statistic, one entry per grid pair.
struct Phase1Stats {
  std::vector<PairStats> per_pair;
  long n_phase1 = 0;
};

struct Phase1Result {
  Phase1Stats stats;
  Matrix samples;  // one row per in-control (rep, t) sample, one column per pair
  std::vector<double> p_tilde_pool;  // standardized max per sample row
};

struct CusumConfig {
  double allowance = 0.5;     // d
  double limit = 0.0;         // L
  double target_arl0 = 200.0;
};

struct CusumStep {
  int t = 0;
  double p_tilde = 0.0;
  LambdaPair winner;
  double w = 0.0;
  bool signal = false;
};

struct CusumState {
  double w = 0.0;
  int t = 0;
  std::vector<CusumStep> history;
};

/// Model configuration applied per monitoring window; the year-mode bases are
/// identity so that windows of any length share one specification.
struct Pipeline {
  Matrix mean_spatial;
  Matrix mean_weekly;
  Matrix hot_spatial;
  Matrix hot_weekly;
  double ridge_scale = 1e-8;
  FistaConfig fista;
  bool scale_lambda = true;

  static Pipeline identity(Index n1, Index n2);
  BasisSet mean_basis(Index years) const;
  BasisSet hotspot_basis(Index years) const;
};

/// P_t^+ = (h+)' r / sqrt((h+)'h+), where h+ zeroes negative entries of h.
/// Returns 0 when h has no positive entries.
double positive_part_statistic(const Vector& h, const Vector& r);

using InControlSource = std::function<Tensor3(std::uint64_t rep_seed)>;
using StreamSource =
    std::function<std::vector<double>(std::uint64_t rep_seed, int length)>;

/// Runs the full per-window fit + statistic on `reps` in-control replications
/// and pools the per-pair moments across replications and window positions.
/// The source must be callable concurrently for distinct seeds.
Phase1Result phase1_calibrate(const InControlSource& source,
                              const LambdaGrid& grid, int reps,
                              const Pipeline& pipe, std::uint64_t seed = 0,
                              int threads = 0);

/// Standardized max statistic over usable pairs; ties broken by the smallest
/// (lambda1, lambda2) lexicographically. Entries of p_values that are NaN are
/// skipped (failed fits).
std::pair<double, LambdaPair> standardized_max(
    const std::vector<double>& p_values, const LambdaGrid& grid,
    const Phase1Stats& stats);

/// W_t = max{0, W_{t-1} + p_tilde - d}; appends one history step, setting the
/// signal flag when W_t exceeds cfg.limit.
CusumState cusum_update(CusumState state, double p_tilde, LambdaPair winner,
                        const CusumConfig& cfg);

/// Bisection for the control limit L so that the Monte-Carlo in-control mean
/// run length over `reps` streams lands within 10% of target_arl0. Run
/// lengths are capped at 10 * target_arl0 per replication.
double calibrate_limit(const StreamSource& source, double allowance,
                       double target_arl0, int reps, std::uint64_t seed = 0,
                       int threads = 0);

/// Stream source resampling iid from an empirical pool of standardized
/// statistics (e.g. Phase1Result::p_tilde_pool).
StreamSource bootstrap_stream(std::vector<double> pool);

struct MonitorOptions {
  /// Signals strictly before this 1-based index reset the chart instead of
  /// stopping the run (used by benchmark protocols with a known change time).
  int restart_before = 0;
  /// Stop scanning after this many years even if no signal (0 = full series).
  int max_years = 0;
};

struct MonitorResult {
  std::optional<int> t_star;  // 1-based year of the first signal
  LambdaPair winner;
  std::vector<CusumStep> history;
  std::optional<ModelFit> winner_fit;  // the winning pair's fit at t_star
  std::vector<std::string> warnings;
  int false_alarms = 0;  // pre-change signals consumed by restart_before
};

/// Year-by-year monitoring: at each t the model is fitted per grid pair on
/// the cumulative window (years 1..t), the standardized max statistic feeds
/// the CUSUM recursion, and the first crossing of cfg.limit is reported.
/// A failed pair at some t is skipped with a warning.
MonitorResult monitor_run(const Tensor3& series, const Pipeline& pipe,
                          const LambdaGrid& grid, const Phase1Stats& stats,
                          const CusumConfig& cfg,
                          const MonitorOptions& options = {});

}  // namespace ssr
