#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssr/localizer.hpp"
#include "ssr/monitor.hpp"

namespace ssr {

/// Generative protocol: per year t the (state, week) grid receives a smooth
/// background, a constant upward shift of size delta on hot_cells once
/// t >= tau, and iid N(0, sigma^2) noise.
struct SimConfig {
  Index n1 = 50;
  Index n2 = 51;
  int horizon = 100;  // T
  int tau = 50;
  double delta = 0.1;
  double sigma = 0.1;
  std::vector<std::pair<int, int>> hot_cells;  // 1-based (state, week)
  double bandwidth_scale = 1.0;  // kernel bandwidth = scale * median distance
  double trend_drift = 0.5;      // background decays linearly by this fraction
  std::uint64_t coeff_seed = 1;  // background coefficients
  std::uint64_t noise_seed = 2;  // observation noise

  void validate() const;
};

/// Pairwise Euclidean distances between n1 synthetic unit positions laid out
/// on a square grid; stands in for geographic centroids in simulations.
Matrix synthetic_unit_distances(Index n1);

/// Hot-cell set used by the benchmark protocol: 5 spread-out states crossed
/// with the leading and trailing week bands, scaled to (n1, n2). At
/// (50, 51) this is states {7, 11, 35, 43, 48} x weeks {1..10, 41..51}.
std::vector<std::pair<int, int>> default_hot_cells(Index n1, Index n2);

/// Full benchmark protocol at a given shift size: 50 x 51 grid, T = 100,
/// tau = 50, sigma = 0.1, default hot cells.
SimConfig benchmark_protocol(double delta);

Tensor3 generate(const SimConfig& cfg);

/// Kernel spatial basis matched to the generator's synthetic geometry.
Matrix simulation_kernel_basis(Index n1, double bandwidth_scale);

struct MetricResult {
  double precision = 0.0;
  double recall = 0.0;
  double f_arith = 0.0;
  double f_harm = 0.0;
  int delay = 0;
  bool empty_detection = false;
};

/// precision = |detected n true| / |detected|, recall = |detected n true| /
/// |true|, F_harm = 2pr/(p+r), F_arith = (p+r)/2, delay = detected_t - tau + 1
/// capped at `cap`. Empty detection reports precision 0 with a flag.
MetricResult metrics(const std::vector<std::pair<int, int>>& detected,
                     const std::vector<std::pair<int, int>>& truth,
                     int detected_t, int tau, int cap);

struct ArlResult {
  double mean = 0.0;
  double sd = 0.0;
};

/// Detection-time callback for one replication: returns the 1-based signal
/// year or nothing. Must be safe to call concurrently for distinct reps.
using DetectionMethod =
    std::function<std::optional<int>(const SimConfig& cfg, std::uint64_t rep)>;

/// Average detection delay when the change occurs at t = 1 (tau = 1 variant
/// of cfg). Never-signalling replications count as `cap`.
ArlResult arl1(const DetectionMethod& method, SimConfig cfg, int reps, int cap,
               std::uint64_t seed = 0, int threads = 0);

/// Hotelling T^2 chart with diagonal covariance shrinkage
/// S <- (1-gamma) S + gamma diag(S); gamma = 0 requires more phase-1 samples
/// than dimensions. The statistic is (y - ybar)' S^{-1} (y - ybar).
class T2Chart {
 public:
  /// phase1: one row per in-control sample of length n1*n2.
  T2Chart(const Matrix& phase1, double gamma);
  double statistic(const Vector& y) const;
  Index dim() const { return mean_.size(); }

 private:
  Vector mean_;
  Vector dinv_;        // inverse of the diagonal part
  Matrix dinv_u_;      // D^{-1} U for the Woodbury form
  Eigen::LDLT<Matrix> core_;  // I + U' D^{-1} U
  bool woodbury_ = false;
  Matrix cov_solver_;  // dense S^{-1} when not using Woodbury
};

/// Scores chart on the top-k phase-1 principal components; the statistic is
/// the scaled score norm sum_j (v_j'(y - ybar))^2 / ell_j.
class PcaChart {
 public:
  PcaChart(const Matrix& phase1, int components);
  double statistic(const Vector& y) const;
  int components() const { return static_cast<int>(eigvals_.size()); }

 private:
  Vector mean_;
  Matrix basis_;   // p x k
  Vector eigvals_; // k
};

/// Shewhart-style limit: empirical (1 - 1/target_arl0) quantile of the
/// in-control statistic samples.
double shewhart_limit(std::vector<double> in_control_stats, double target_arl0);

/// First year whose T^2 statistic exceeds `limit`, scanning year slices.
std::optional<int> t2_baseline(const Tensor3& series, const Matrix& phase1,
                               double gamma, double limit);

std::optional<int> pca_baseline(const Tensor3& series, const Matrix& phase1,
                                int components, double limit);

/// Ablation: the same decomposition pipeline with lambda2 forced to 0 and a
/// Shewhart rule on the standardized max statistic (no accumulation).
std::optional<int> shewhart_ablation(const Tensor3& series, const Pipeline& pipe,
                                     const LambdaGrid& grid,
                                     const Phase1Stats& stats, double limit);

enum class Method { ssr, t2, pca, shewhart };
std::string method_name(Method m);

struct BenchmarkRun {
  SimConfig base;                     // detection scenario (uses base.tau)
  LambdaGrid grid = LambdaGrid::standard();
  double allowance = 0.5;
  double target_arl0 = 200.0;
  int phase1_reps = 40;
  int phase1_years = 6;
  int limit_reps = 500;
  int baseline_phase1_samples = 60;   // per-rep in-control years for T2/PCA
  int baseline_calib_samples = 2000;  // per-rep MC samples for their limits
  int pca_components = 5;
  double shrink_gamma = 0.1;
  int reps = 100;
  int arl_cap = 0;                    // 0 -> horizon - tau
  FistaConfig fista;
  double ridge_scale = 1e-8;
  std::uint64_t seed = 2024;
  int threads = 0;
  std::vector<Method> methods = {Method::ssr, Method::t2, Method::pca};
};

struct MethodRow {
  std::string method;
  double delta = 0.0;
  // NaN marks columns a method does not produce (baselines do not localize).
  double precision = 0.0, precision_sd = 0.0;
  double recall = 0.0, recall_sd = 0.0;
  double f_arith = 0.0, f_harm = 0.0;
  double arl1 = 0.0, arl1_sd = 0.0;
  int reps = 0;
  std::uint64_t seed = 0;
  int failed_reps = 0;
};

struct BenchmarkResult {
  std::vector<MethodRow> rows;
};

/// Runs every requested method over seeded replications of the protocol:
/// localization metrics from the tau-change scenario and ARL1 from the
/// tau = 1 variant. Per-replication failures are recorded, not fatal.
BenchmarkResult benchmark(const BenchmarkRun& run);

}  // namespace ssr
