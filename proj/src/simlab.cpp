#include "ssr/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "parallel.hpp"
#include "window_scan.hpp"

namespace ssr {

using detail::grow_warm_starts;
using detail::parallel_for;
using detail::window_statistics;
using detail::window_view;
using detail::WindowStats;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_offdiag(const Matrix& dist) {
  std::vector<double> vals;
  for (Index i = 0; i < dist.rows(); ++i)
    for (Index j = i + 1; j < dist.cols(); ++j) vals.push_back(dist(i, j));
  if (vals.empty()) return 1.0;
  std::sort(vals.begin(), vals.end());
  return vals[vals.size() / 2];
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {kNaN, kNaN};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

void SimConfig::validate() const {
  if (n1 < 1 || n2 < 1 || horizon < 1)
    throw std::invalid_argument("SimConfig: dims and horizon must be positive");
  if (tau < 1 || tau > horizon)
    throw std::invalid_argument("SimConfig: need 1 <= tau <= horizon");
  if (delta < 0.0) throw std::invalid_argument("SimConfig: delta must be >= 0");
  if (sigma <= 0.0) throw std::invalid_argument("SimConfig: sigma must be > 0");
  if (trend_drift < 0.0 || trend_drift > 1.0)
    throw std::invalid_argument("SimConfig: trend_drift must be in [0, 1]");
  for (const auto& [s, w] : hot_cells)
    if (s < 1 || s > n1 || w < 1 || w > n2)
      throw std::invalid_argument("SimConfig: hot cell (" + std::to_string(s) +
                                  ", " + std::to_string(w) +
                                  ") outside the grid");
}

Matrix synthetic_unit_distances(Index n1) {
  if (n1 < 1) throw std::invalid_argument("synthetic_unit_distances: n1 >= 1");
  const Index side = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n1))));
  Matrix dist(n1, n1);
  for (Index i = 0; i < n1; ++i)
    for (Index j = 0; j < n1; ++j) {
      const double dx = static_cast<double>(i % side) - static_cast<double>(j % side);
      const double dy = static_cast<double>(i / side) - static_cast<double>(j / side);
      dist(i, j) = std::sqrt(dx * dx + dy * dy);
    }
  return dist;
}

std::vector<std::pair<int, int>> default_hot_cells(Index n1, Index n2) {
  // five spread-out units at 50-state positions 7, 11, 35, 43, 48
  std::set<int> states;
  for (int base : {7, 11, 35, 43, 48}) {
    int s = static_cast<int>(std::lround(base * static_cast<double>(n1) / 50.0));
    s = std::clamp(s, 1, static_cast<int>(n1));
    states.insert(s);
  }
  const int lead_end =
      std::max<int>(1, static_cast<int>(std::lround(10.0 * static_cast<double>(n2) / 51.0)));
  const int tail_start = std::min<int>(
      static_cast<int>(n2),
      std::max<int>(lead_end + 1,
                    static_cast<int>(std::lround(41.0 * static_cast<double>(n2) / 51.0))));
  std::vector<std::pair<int, int>> cells;
  for (int s : states) {
    for (int w = 1; w <= lead_end; ++w) cells.emplace_back(s, w);
    for (int w = tail_start; w <= static_cast<int>(n2); ++w) cells.emplace_back(s, w);
  }
  return cells;
}

SimConfig benchmark_protocol(double delta) {
  SimConfig cfg;
  cfg.n1 = 50;
  cfg.n2 = 51;
  cfg.horizon = 100;
  cfg.tau = 50;
  cfg.delta = delta;
  cfg.sigma = 0.1;
  cfg.hot_cells = default_hot_cells(50, 51);
  return cfg;
}

Matrix simulation_kernel_basis(Index n1, double bandwidth_scale) {
  const Matrix dist = synthetic_unit_distances(n1);
  const double bw = std::max(bandwidth_scale * median_offdiag(dist), 1e-6);
  return gaussian_kernel_basis(dist, bw);
}

Tensor3 generate(const SimConfig& cfg) {
  cfg.validate();
  const Matrix kernel = simulation_kernel_basis(cfg.n1, cfg.bandwidth_scale);

  std::mt19937_64 coeff_rng(cfg.coeff_seed);
  std::normal_distribution<double> gauss;
  Matrix theta(cfg.n1, cfg.n2);
  const double coeff_scale =
      1.0 / std::sqrt(static_cast<double>(cfg.n1 * cfg.n2));
  for (Index j = 0; j < cfg.n2; ++j)
    for (Index i = 0; i < cfg.n1; ++i) theta(i, j) = coeff_scale * gauss(coeff_rng);
  const Matrix background = kernel * theta;

  Matrix shift = Matrix::Zero(cfg.n1, cfg.n2);
  for (const auto& [s, w] : cfg.hot_cells) shift(s - 1, w - 1) = cfg.delta;

  std::mt19937_64 noise_rng(cfg.noise_seed);
  Tensor3 out(cfg.n1, cfg.n2, cfg.horizon);
  const double denom = cfg.horizon > 1 ? static_cast<double>(cfg.horizon - 1) : 1.0;
  for (int t = 1; t <= cfg.horizon; ++t) {
    const double rho = 1.0 - cfg.trend_drift * static_cast<double>(t - 1) / denom;
    Matrix slice = rho * background;
    if (t >= cfg.tau) slice += shift;
    for (Index j = 0; j < cfg.n2; ++j)
      for (Index i = 0; i < cfg.n1; ++i)
        slice(i, j) += cfg.sigma * gauss(noise_rng);
    out.set_year_slice(t - 1, slice);
  }
  return out;
}

MetricResult metrics(const std::vector<std::pair<int, int>>& detected,
                     const std::vector<std::pair<int, int>>& truth,
                     int detected_t, int tau, int cap) {
  if (truth.empty())
    throw std::invalid_argument("metrics: truth set must be non-empty");
  const std::set<std::pair<int, int>> truth_set(truth.begin(), truth.end());
  const std::set<std::pair<int, int>> det_set(detected.begin(), detected.end());
  long hits = 0;
  for (const auto& c : det_set) hits += truth_set.count(c);

  MetricResult m;
  m.empty_detection = det_set.empty();
  m.precision = det_set.empty()
                    ? 0.0
                    : static_cast<double>(hits) / static_cast<double>(det_set.size());
  m.recall = static_cast<double>(hits) / static_cast<double>(truth_set.size());
  m.f_arith = 0.5 * (m.precision + m.recall);
  m.f_harm = (m.precision + m.recall) > 0.0
                 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                 : 0.0;
  m.delay = std::min(detected_t - tau + 1, cap);
  return m;
}

ArlResult arl1(const DetectionMethod& method, SimConfig cfg, int reps, int cap,
               std::uint64_t seed, int threads) {
  if (reps < 1) throw std::invalid_argument("arl1: reps must be >= 1");
  if (cap < 1) throw std::invalid_argument("arl1: cap must be >= 1");
  cfg.tau = 1;
  cfg.horizon = cap;
  cfg.validate();
  std::vector<double> delays(reps);
  parallel_for(reps, threads, [&](int rep) {
    SimConfig rep_cfg = cfg;
    rep_cfg.coeff_seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(rep));
    rep_cfg.noise_seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(rep) + 1);
    const auto t_star = method(rep_cfg, static_cast<std::uint64_t>(rep));
    delays[rep] = t_star ? std::min(*t_star, cap) : cap;
  });
  const auto [mean, sd] = mean_sd(delays);
  return {mean, sd};
}

T2Chart::T2Chart(const Matrix& phase1, double gamma) {
  const Index m = phase1.rows();
  const Index p = phase1.cols();
  if (m < 2) throw std::invalid_argument("T2Chart: need at least 2 phase-1 samples");
  if (gamma < 0.0 || gamma > 1.0)
    throw std::invalid_argument("T2Chart: gamma must be in [0, 1]");
  mean_ = phase1.colwise().mean();
  Matrix centered = phase1.rowwise() - mean_.transpose();
  const double denom = static_cast<double>(m - 1);
  const Vector diag_s = centered.colwise().squaredNorm() / denom;

  if (gamma == 0.0) {
    if (m - 1 < p)
      throw NumericalError(
          "T2Chart: sample covariance is singular (fewer phase-1 samples than "
          "dimensions); use a shrinkage gamma > 0");
    Matrix cov = centered.transpose() * centered / denom;
    Eigen::LDLT<Matrix> ldlt(cov);
    const Vector d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success ||
        d.minCoeff() <= d.cwiseAbs().maxCoeff() * 1e-12)
      throw NumericalError(
          "T2Chart: sample covariance is numerically singular; use a "
          "shrinkage gamma > 0");
    cov_solver_ = ldlt.solve(Matrix::Identity(p, p));
    woodbury_ = false;
    return;
  }

  if (diag_s.minCoeff() <= 0.0)
    throw NumericalError(
        "T2Chart: a coordinate has zero phase-1 variance; shrinkage cannot "
        "regularize it");
  // S = gamma diag(S) + U U' with U = sqrt((1-gamma)/(m-1)) centered'
  dinv_ = (gamma * diag_s).cwiseInverse();
  const Matrix u = std::sqrt((1.0 - gamma) / denom) * centered.transpose();
  dinv_u_ = dinv_.asDiagonal() * u;
  core_.compute(Matrix::Identity(m, m) + u.transpose() * dinv_u_);
  woodbury_ = true;
}

double T2Chart::statistic(const Vector& y) const {
  if (y.size() != mean_.size())
    throw ShapeError("T2Chart: observation length mismatch");
  const Vector w = y - mean_;
  if (!woodbury_) return w.dot(cov_solver_ * w);
  const Vector dw = dinv_.cwiseProduct(w);
  const Vector u = dinv_u_.transpose() * w;
  return w.dot(dw) - u.dot(core_.solve(u));
}

PcaChart::PcaChart(const Matrix& phase1, int components) {
  const Index m = phase1.rows();
  if (m < 2) throw std::invalid_argument("PcaChart: need at least 2 phase-1 samples");
  mean_ = phase1.colwise().mean();
  const Matrix centered = phase1.rowwise() - mean_.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const double tol = sv.size() > 0 ? sv[0] * 1e-10 : 0.0;
  int rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  if (components < 1 || components > rank)
    throw std::invalid_argument("PcaChart: components must be in [1, rank=" +
                                std::to_string(rank) + "]");
  basis_ = svd.matrixV().leftCols(components);
  eigvals_ = sv.head(components).array().square() /
             static_cast<double>(m - 1);
}

double PcaChart::statistic(const Vector& y) const {
  if (y.size() != mean_.size())
    throw ShapeError("PcaChart: observation length mismatch");
  const Vector scores = basis_.transpose() * (y - mean_);
  return (scores.array().square() / eigvals_.array()).sum();
}

double shewhart_limit(std::vector<double> in_control_stats, double target_arl0) {
  if (target_arl0 <= 1.0)
    throw std::invalid_argument("shewhart_limit: target_arl0 must exceed 1");
  if (in_control_stats.empty())
    throw std::invalid_argument("shewhart_limit: empty sample");
  std::sort(in_control_stats.begin(), in_control_stats.end());
  const double q = 1.0 - 1.0 / target_arl0;
  const std::size_t n = in_control_stats.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  k = std::min(std::max<std::size_t>(k, 1), n);
  return in_control_stats[k - 1];
}

std::optional<int> t2_baseline(const Tensor3& series, const Matrix& phase1,
                               double gamma, double limit) {
  const T2Chart chart(phase1, gamma);
  if (chart.dim() != series.n1() * series.n2())
    throw ShapeError("t2_baseline: phase-1 dimension does not match series");
  for (Index k = 0; k < series.n3(); ++k) {
    const Vector y = series.year_slice(k).reshaped();
    if (chart.statistic(y) > limit) return static_cast<int>(k) + 1;
  }
  return std::nullopt;
}

std::optional<int> pca_baseline(const Tensor3& series, const Matrix& phase1,
                                int components, double limit) {
  const PcaChart chart(phase1, components);
  for (Index k = 0; k < series.n3(); ++k) {
    const Vector y = series.year_slice(k).reshaped();
    if (chart.statistic(y) > limit) return static_cast<int>(k) + 1;
  }
  return std::nullopt;
}

std::optional<int> shewhart_ablation(const Tensor3& series, const Pipeline& pipe,
                                     const LambdaGrid& grid,
                                     const Phase1Stats& stats, double limit) {
  grid.validate();
  for (const auto& pair : grid.pairs)
    if (pair.lambda2 != 0.0)
      throw std::invalid_argument(
          "shewhart_ablation: grid must have lambda2 = 0 everywhere");
  std::vector<WarmStart> warm(grid.pairs.size());
  for (Index t = 1; t <= series.n3(); ++t) {
    grow_warm_starts(warm, series.n1(), series.n2(), t);
    const Tensor3 window = window_view(series, t);
    WindowStats ws = window_statistics(window, pipe, grid, &warm, false);
    const auto [p_tilde, winner] = standardized_max(ws.p, grid, stats);
    if (p_tilde > limit) return static_cast<int>(t);
  }
  return std::nullopt;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::ssr: return "ssr";
    case Method::t2: return "t2";
    case Method::pca: return "pca";
    case Method::shewhart: return "shewhart";
  }
  return "unknown";
}

namespace {

/// One detection-scenario replication outcome for a localizing method.
struct RepOutcome {
  bool failed = false;
  MetricResult metric;
};

Matrix in_control_rows(const SimConfig& base, int samples,
                       std::uint64_t coeff_seed, std::uint64_t noise_seed) {
  SimConfig cfg = base;
  cfg.delta = 0.0;
  cfg.tau = 1;
  cfg.horizon = samples;
  cfg.hot_cells.clear();
  cfg.coeff_seed = coeff_seed;
  cfg.noise_seed = noise_seed;
  const Tensor3 t = generate(cfg);
  Matrix rows(samples, base.n1 * base.n2);
  for (int k = 0; k < samples; ++k)
    rows.row(k) = t.year_slice(k).reshaped().transpose();
  return rows;
}

}  // namespace

BenchmarkResult benchmark(const BenchmarkRun& run) {
  run.base.validate();
  run.grid.validate();
  if (run.reps < 1) throw std::invalid_argument("benchmark: reps must be >= 1");
  const int cap =
      run.arl_cap > 0 ? run.arl_cap : std::max(1, run.base.horizon - run.base.tau);

  Pipeline pipe;
  pipe.mean_spatial = simulation_kernel_basis(run.base.n1, run.base.bandwidth_scale);
  pipe.mean_weekly = Matrix::Identity(run.base.n2, run.base.n2);
  pipe.hot_spatial = Matrix::Identity(run.base.n1, run.base.n1);
  pipe.hot_weekly = Matrix::Identity(run.base.n2, run.base.n2);
  pipe.ridge_scale = run.ridge_scale;
  pipe.fista = run.fista;

  const auto in_control_source = [&](std::uint64_t rep_seed) {
    SimConfig cfg = run.base;
    cfg.delta = 0.0;
    cfg.tau = 1;
    cfg.horizon = run.phase1_years;
    cfg.hot_cells.clear();
    cfg.coeff_seed = mix_seed(rep_seed, 1);
    cfg.noise_seed = mix_seed(rep_seed, 2);
    return generate(cfg);
  };

  const bool need_ssr =
      std::count(run.methods.begin(), run.methods.end(), Method::ssr) > 0;
  const bool need_shew =
      std::count(run.methods.begin(), run.methods.end(), Method::shewhart) > 0;

  Phase1Result phase1;
  double cusum_limit = 0.0;
  if (need_ssr) {
    phase1 = phase1_calibrate(in_control_source, run.grid, run.phase1_reps, pipe,
                              mix_seed(run.seed, 11), run.threads);
    cusum_limit =
        calibrate_limit(bootstrap_stream(phase1.p_tilde_pool), run.allowance,
                        run.target_arl0, run.limit_reps, mix_seed(run.seed, 12),
                        run.threads);
  }

  LambdaGrid shew_grid;
  Phase1Result shew_phase1;
  double shew_limit = 0.0;
  if (need_shew) {
    std::set<double> l1s;
    for (const auto& p : run.grid.pairs) l1s.insert(p.lambda1);
    for (double l1 : l1s) shew_grid.pairs.push_back({l1, 0.0});
    shew_phase1 = phase1_calibrate(in_control_source, shew_grid, run.phase1_reps,
                                   pipe, mix_seed(run.seed, 13), run.threads);
    shew_limit = shewhart_limit(shew_phase1.p_tilde_pool, run.target_arl0);
  }

  BenchmarkResult result;
  for (Method method : run.methods) {
    MethodRow row;
    row.method = method_name(method);
    row.delta = run.base.delta;
    row.reps = run.reps;
    row.seed = run.seed;

    const bool localizes = method == Method::ssr || method == Method::shewhart;

    // Localization metrics from the tau-change scenario.
    if (localizes) {
      std::vector<RepOutcome> outcomes(run.reps);
      parallel_for(run.reps, run.threads, [&](int rep) {
        RepOutcome& oc = outcomes[rep];
        try {
          SimConfig cfg = run.base;
          cfg.coeff_seed = mix_seed(run.seed, 0x100000 + rep);
          cfg.noise_seed = mix_seed(run.seed, 0x200000 + rep);
          cfg.horizon = std::min(run.base.horizon, run.base.tau + cap - 1);
          const Tensor3 series = generate(cfg);

          std::optional<int> t_star;
          std::optional<HotspotReport> report;
          if (method == Method::ssr) {
            MonitorOptions opts;
            opts.restart_before = cfg.tau;
            MonitorResult mr = monitor_run(series, pipe, run.grid, phase1.stats,
                                           {run.allowance, cusum_limit,
                                            run.target_arl0},
                                           opts);
            t_star = mr.t_star;
            if (mr.t_star && mr.winner_fit)
              report = localize(*mr.winner_fit, mr.winner, *mr.t_star);
          } else {
            // Shewhart has no chart state; ignore pre-change exceedances by
            // scanning from tau.
            std::vector<WarmStart> warm(shew_grid.pairs.size());
            for (Index t = 1; t <= series.n3(); ++t) {
              grow_warm_starts(warm, series.n1(), series.n2(), t);
              const Tensor3 window = window_view(series, t);
              WindowStats ws =
                  window_statistics(window, pipe, shew_grid, &warm, true);
              const auto [p_tilde, winner] =
                  standardized_max(ws.p, shew_grid, shew_phase1.stats);
              if (p_tilde > shew_limit && static_cast<int>(t) >= cfg.tau) {
                t_star = static_cast<int>(t);
                for (std::size_t g = 0; g < shew_grid.pairs.size(); ++g)
                  if (shew_grid.pairs[g] == winner)
                    report = localize(ws.fits[g], winner, *t_star);
                break;
              }
            }
          }

          std::vector<std::pair<int, int>> detected;
          if (report)
            for (const auto& c : report->cells) detected.emplace_back(c.state, c.week);
          const int detected_t = t_star ? *t_star : cfg.tau + cap - 1;
          oc.metric = metrics(detected, run.base.hot_cells, detected_t,
                              cfg.tau, cap);
        } catch (const std::exception&) {
          oc.failed = true;
        }
      });

      std::vector<double> ps, rs, fas, fhs;
      for (const auto& oc : outcomes) {
        if (oc.failed) {
          ++row.failed_reps;
          continue;
        }
        ps.push_back(oc.metric.precision);
        rs.push_back(oc.metric.recall);
        fas.push_back(oc.metric.f_arith);
        fhs.push_back(oc.metric.f_harm);
      }
      std::tie(row.precision, row.precision_sd) = mean_sd(ps);
      std::tie(row.recall, row.recall_sd) = mean_sd(rs);
      row.f_arith = mean_sd(fas).first;
      row.f_harm = mean_sd(fhs).first;
    } else {
      row.precision = row.precision_sd = kNaN;
      row.recall = row.recall_sd = kNaN;
      row.f_arith = row.f_harm = kNaN;
    }

    // ARL1 from the tau = 1 scenario.
    DetectionMethod detect;
    switch (method) {
      case Method::ssr:
        detect = [&](const SimConfig& cfg, std::uint64_t) {
          const Tensor3 series = generate(cfg);
          MonitorResult mr = monitor_run(series, pipe, run.grid, phase1.stats,
                                         {run.allowance, cusum_limit,
                                          run.target_arl0});
          return mr.t_star;
        };
        break;
      case Method::shewhart:
        detect = [&](const SimConfig& cfg, std::uint64_t) {
          const Tensor3 series = generate(cfg);
          return shewhart_ablation(series, pipe, shew_grid, shew_phase1.stats,
                                   shew_limit);
        };
        break;
      case Method::t2:
        detect = [&](const SimConfig& cfg, std::uint64_t rep) {
          const std::uint64_t rs = mix_seed(mix_seed(run.seed, 0x300000), rep);
          const std::uint64_t coeff = cfg.coeff_seed;
          const Matrix phase1_rows = in_control_rows(
              cfg, run.baseline_phase1_samples, coeff, mix_seed(rs, 1));
          const Matrix calib_rows = in_control_rows(
              cfg, run.baseline_calib_samples, coeff, mix_seed(rs, 2));
          const T2Chart chart(phase1_rows, run.shrink_gamma);
          std::vector<double> calib(calib_rows.rows());
          for (Index i = 0; i < calib_rows.rows(); ++i)
            calib[i] = chart.statistic(calib_rows.row(i).transpose());
          const double limit = shewhart_limit(calib, run.target_arl0);
          return t2_baseline(generate(cfg), phase1_rows, run.shrink_gamma, limit);
        };
        break;
      case Method::pca:
        detect = [&](const SimConfig& cfg, std::uint64_t rep) {
          const std::uint64_t rs = mix_seed(mix_seed(run.seed, 0x400000), rep);
          const std::uint64_t coeff = cfg.coeff_seed;
          const Matrix phase1_rows = in_control_rows(
              cfg, run.baseline_phase1_samples, coeff, mix_seed(rs, 1));
          const Matrix calib_rows = in_control_rows(
              cfg, run.baseline_calib_samples, coeff, mix_seed(rs, 2));
          const PcaChart chart(phase1_rows, run.pca_components);
          std::vector<double> calib(calib_rows.rows());
          for (Index i = 0; i < calib_rows.rows(); ++i)
            calib[i] = chart.statistic(calib_rows.row(i).transpose());
          const double limit = shewhart_limit(calib, run.target_arl0);
          return pca_baseline(generate(cfg), phase1_rows, run.pca_components,
                              limit);
        };
        break;
    }
    const ArlResult arl = arl1(detect, run.base, run.reps, cap,
                               mix_seed(run.seed, 0x500000), run.threads);
    row.arl1 = arl.mean;
    row.arl1_sd = arl.sd;
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace ssr
