// Command-line front end: simulate / fit / calibrate / monitor / benchmark.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 numerical.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssr/io.hpp"
#include "ssr/localizer.hpp"
#include "ssr/monitor.hpp"
#include "ssr/simlab.hpp"

namespace {

using nlohmann::json;

/// Deletes declared outputs unless dismissed, so failures leave no partial files.
class OutputGuard {
 public:
  void add(const std::string& path) { paths_.push_back(path); }
  void dismiss() { paths_.clear(); }
  ~OutputGuard() {
    for (const auto& p : paths_) std::remove(p.c_str());
  }

 private:
  std::vector<std::string> paths_;
};

json load_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) throw ssr::DataError(std::string("cannot open config ") + argv[i + 1]);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ssr::DataError(std::string("config: invalid JSON: ") + e.what());
      }
      if (!j.is_object()) throw ssr::DataError("config: expected a flat JSON object");
      return j;
    }
  return json::object();
}

template <typename T>
void seed_default(const json& cfg, const std::string& key, T& value) {
  if (cfg.contains(key)) {
    try {
      value = cfg.at(key).get<T>();
    } catch (const json::exception&) {
      throw ssr::DataError("config: bad value for '" + key + "'");
    }
  }
}

struct DataFlags {
  std::string path;
  std::string format = "auto";  // auto | cumulative | values
  int weeks_kept = 51;
  bool pad_ragged = false;
};

ssr::IngestResult load_data(const DataFlags& flags) {
  std::string format = flags.format;
  if (format == "auto") {
    std::ifstream in(flags.path);
    if (!in) throw ssr::DataError("cannot open " + flags.path);
    std::string header;
    std::getline(in, header);
    format = header.find("cumulative_count") != std::string::npos ? "cumulative"
                                                                  : "values";
  }
  if (format == "cumulative")
    return ssr::ingest_csv(flags.path, flags.weeks_kept, flags.pad_ragged);
  if (format == "values") return ssr::ingest_values_csv(flags.path);
  throw std::invalid_argument("unknown --format '" + format + "'");
}

struct KernelFlags {
  std::string distances;
  bool synthetic = false;
  double bandwidth = 0.0;  // 0 -> cross-validated
};

ssr::Matrix spatial_kernel(const KernelFlags& flags, const ssr::IngestResult& data) {
  ssr::Matrix dist;
  if (flags.synthetic) {
    dist = ssr::synthetic_unit_distances(data.tensor.n1());
  } else if (!flags.distances.empty()) {
    dist = ssr::read_distance_csv(flags.distances, data.labels);
  } else {
    throw std::invalid_argument(
        "the trend basis needs --distances FILE or --synthetic-distances");
  }
  double bw = flags.bandwidth;
  if (bw <= 0.0) {
    bw = ssr::select_bandwidth(dist, data.tensor);
    std::cerr << "selected bandwidth " << bw << " by cross-validation\n";
  }
  return ssr::gaussian_kernel_basis(dist, bw);
}

void add_fista_flags(CLI::App* cmd, const json& cfg, ssr::FistaConfig& fista) {
  seed_default(cfg, "max_outer", fista.max_outer);
  seed_default(cfg, "max_inner", fista.max_inner);
  seed_default(cfg, "outer_tol", fista.outer_tol);
  seed_default(cfg, "inner_tol", fista.inner_tol);
  cmd->add_option("--max-outer", fista.max_outer, "outer iteration cap");
  cmd->add_option("--max-inner", fista.max_inner, "inner iteration cap");
  cmd->add_option("--outer-tol", fista.outer_tol, "outer stopping tolerance");
  cmd->add_option("--inner-tol", fista.inner_tol, "inner stopping tolerance");
}

ssr::LambdaGrid grid_from(const std::vector<double>& l1s,
                          const std::vector<double>& l2s) {
  ssr::LambdaGrid grid;
  for (double a : l1s)
    for (double b : l2s) grid.pairs.push_back({a, b});
  grid.validate();
  return grid;
}

int run(int argc, char** argv) {
  const json cfg = load_config(argc, argv);

  CLI::App app{"Spatio-temporal hot-spot decomposition and monitoring"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config; flags override it");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset CSV");
  ssr::SimConfig sim_cfg;
  std::string sim_out;
  bool sim_no_hot = false;
  seed_default(cfg, "n1", sim_cfg.n1);
  seed_default(cfg, "n2", sim_cfg.n2);
  seed_default(cfg, "horizon", sim_cfg.horizon);
  seed_default(cfg, "tau", sim_cfg.tau);
  seed_default(cfg, "delta", sim_cfg.delta);
  seed_default(cfg, "sigma", sim_cfg.sigma);
  seed_default(cfg, "seed", sim_cfg.noise_seed);
  sim->add_option("--out", sim_out, "output CSV path")->required();
  sim->add_option("--n1", sim_cfg.n1, "spatial units");
  sim->add_option("--n2", sim_cfg.n2, "weeks per year");
  sim->add_option("--horizon", sim_cfg.horizon, "years");
  sim->add_option("--tau", sim_cfg.tau, "change year");
  sim->add_option("--delta", sim_cfg.delta, "shift magnitude");
  sim->add_option("--sigma", sim_cfg.sigma, "noise sd");
  sim->add_option("--coeff-seed", sim_cfg.coeff_seed, "background seed");
  sim->add_option("--seed", sim_cfg.noise_seed, "noise seed");
  sim->add_flag("--no-hot-cells", sim_no_hot, "suppress the default hot cells");

  // ---- fit ----
  auto* fitcmd = app.add_subcommand("fit", "one penalized decomposition");
  DataFlags fit_data;
  KernelFlags fit_kernel;
  double fit_l1 = 0.0, fit_l2 = 0.0, fit_ridge = 1e-8;
  std::string fit_prefix = "fit";
  ssr::FistaConfig fit_fista;
  seed_default(cfg, "data", fit_data.path);
  seed_default(cfg, "weeks_kept", fit_data.weeks_kept);
  seed_default(cfg, "distances", fit_kernel.distances);
  seed_default(cfg, "bandwidth", fit_kernel.bandwidth);
  seed_default(cfg, "ridge_scale", fit_ridge);
  seed_default(cfg, "lambda1", fit_l1);
  seed_default(cfg, "lambda2", fit_l2);
  fitcmd->add_option("--data", fit_data.path, "input CSV")->required(!cfg.contains("data"));
  fitcmd->add_option("--format", fit_data.format, "auto|cumulative|values");
  fitcmd->add_option("--weeks-kept", fit_data.weeks_kept, "weeks kept per year");
  fitcmd->add_flag("--pad-ragged", fit_data.pad_ragged, "zero-pad short years");
  fitcmd->add_option("--distances", fit_kernel.distances, "distance CSV");
  fitcmd->add_flag("--synthetic-distances", fit_kernel.synthetic,
                   "use the synthetic grid geometry");
  fitcmd->add_option("--bandwidth", fit_kernel.bandwidth,
                     "kernel bandwidth (0 = cross-validate)");
  fitcmd->add_option("--lambda1", fit_l1, "sparsity penalty")->required(!cfg.contains("lambda1"));
  fitcmd->add_option("--lambda2", fit_l2, "fused penalty")->required(!cfg.contains("lambda2"));
  fitcmd->add_option("--ridge", fit_ridge, "Gram ridge scale");
  fitcmd->add_option("--out-prefix", fit_prefix, "artifact path prefix");
  add_fista_flags(fitcmd, cfg, fit_fista);

  // ---- calibrate ----
  auto* cal = app.add_subcommand("calibrate",
                                 "phase-1 moments and CUSUM limit from an "
                                 "in-control generator");
  ssr::Index cal_n1 = 50, cal_n2 = 51;
  int cal_years = 6, cal_reps = 40, cal_limit_reps = 500, cal_threads = 0;
  double cal_sigma = 0.1, cal_allowance = 0.5, cal_arl0 = 200.0, cal_ridge = 1e-8;
  double cal_bandwidth = 0.0;
  std::uint64_t cal_seed = 1;
  std::string cal_out = "calibration.json";
  std::vector<double> cal_l1 = {0.01, 0.05, 0.1, 0.5}, cal_l2 = {0.01, 0.1};
  ssr::FistaConfig cal_fista;
  seed_default(cfg, "n1", cal_n1);
  seed_default(cfg, "n2", cal_n2);
  seed_default(cfg, "sigma", cal_sigma);
  seed_default(cfg, "allowance", cal_allowance);
  seed_default(cfg, "target_arl0", cal_arl0);
  seed_default(cfg, "seed", cal_seed);
  seed_default(cfg, "reps", cal_reps);
  seed_default(cfg, "phase1_years", cal_years);
  seed_default(cfg, "lambda1_grid", cal_l1);
  seed_default(cfg, "lambda2_grid", cal_l2);
  seed_default(cfg, "threads", cal_threads);
  cal->add_option("--n1", cal_n1, "spatial units");
  cal->add_option("--n2", cal_n2, "weeks per year");
  cal->add_option("--sigma", cal_sigma, "noise sd");
  cal->add_option("--phase1-years", cal_years, "years per in-control replication");
  cal->add_option("--reps", cal_reps, "in-control replications");
  cal->add_option("--limit-reps", cal_limit_reps, "streams for limit bisection");
  cal->add_option("--allowance", cal_allowance, "CUSUM allowance d");
  cal->add_option("--target-arl0", cal_arl0, "in-control ARL target");
  cal->add_option("--lambda1-grid", cal_l1, "lambda1 grid values");
  cal->add_option("--lambda2-grid", cal_l2, "lambda2 grid values");
  cal->add_option("--bandwidth", cal_bandwidth,
                  "kernel bandwidth in synthetic-grid units (0 = median rule)");
  cal->add_option("--ridge", cal_ridge, "Gram ridge scale");
  cal->add_option("--seed", cal_seed, "root seed");
  cal->add_option("--threads", cal_threads, "worker threads (0 = auto)");
  cal->add_option("--out", cal_out, "calibration JSON path");
  add_fista_flags(cal, cfg, cal_fista);

  // ---- monitor ----
  auto* mon = app.add_subcommand("monitor", "CUSUM monitoring over years");
  DataFlags mon_data;
  KernelFlags mon_kernel;
  std::string mon_calib, mon_prefix = "monitor";
  double mon_ridge = 1e-8;
  bool mon_downward = false;
  ssr::FistaConfig mon_fista;
  seed_default(cfg, "data", mon_data.path);
  seed_default(cfg, "weeks_kept", mon_data.weeks_kept);
  seed_default(cfg, "distances", mon_kernel.distances);
  seed_default(cfg, "bandwidth", mon_kernel.bandwidth);
  seed_default(cfg, "calibration", mon_calib);
  mon->add_option("--data", mon_data.path, "input CSV")->required(!cfg.contains("data"));
  mon->add_option("--format", mon_data.format, "auto|cumulative|values");
  mon->add_option("--weeks-kept", mon_data.weeks_kept, "weeks kept per year");
  mon->add_flag("--pad-ragged", mon_data.pad_ragged, "zero-pad short years");
  mon->add_option("--calibration", mon_calib, "calibration JSON")
      ->required(!cfg.contains("calibration"));
  mon->add_option("--distances", mon_kernel.distances, "distance CSV");
  mon->add_flag("--synthetic-distances", mon_kernel.synthetic,
                "use the synthetic grid geometry");
  mon->add_option("--bandwidth", mon_kernel.bandwidth,
                  "kernel bandwidth (0 = cross-validate)");
  mon->add_option("--ridge", mon_ridge, "Gram ridge scale");
  mon->add_flag("--downward", mon_downward,
                "monitor downward shifts (negates the data)");
  mon->add_option("--out-prefix", mon_prefix, "artifact path prefix");
  add_fista_flags(mon, cfg, mon_fista);

  // ---- benchmark ----
  auto* bench = app.add_subcommand("benchmark", "simulation benchmark table");
  ssr::BenchmarkRun bench_run;
  bench_run.base = ssr::benchmark_protocol(0.1);
  std::string bench_out = "benchmark.csv";
  std::vector<std::string> bench_methods = {"ssr", "t2", "pca"};
  double bench_delta = 0.1;
  seed_default(cfg, "delta", bench_delta);
  seed_default(cfg, "reps", bench_run.reps);
  seed_default(cfg, "seed", bench_run.seed);
  seed_default(cfg, "threads", bench_run.threads);
  seed_default(cfg, "target_arl0", bench_run.target_arl0);
  seed_default(cfg, "allowance", bench_run.allowance);
  bench->add_option("--delta", bench_delta, "shift magnitude");
  bench->add_option("--reps", bench_run.reps, "replications");
  bench->add_option("--n1", bench_run.base.n1, "spatial units");
  bench->add_option("--n2", bench_run.base.n2, "weeks per year");
  bench->add_option("--horizon", bench_run.base.horizon, "years");
  bench->add_option("--tau", bench_run.base.tau, "change year");
  bench->add_option("--sigma", bench_run.base.sigma, "noise sd");
  bench->add_option("--phase1-reps", bench_run.phase1_reps, "phase-1 replications");
  bench->add_option("--phase1-years", bench_run.phase1_years, "phase-1 horizon");
  bench->add_option("--target-arl0", bench_run.target_arl0, "in-control ARL target");
  bench->add_option("--allowance", bench_run.allowance, "CUSUM allowance d");
  bench->add_option("--pca-components", bench_run.pca_components, "PCA chart rank");
  bench->add_option("--baseline-phase1", bench_run.baseline_phase1_samples,
                    "per-rep phase-1 samples for T2/PCA");
  bench->add_option("--methods", bench_methods, "subset of ssr,t2,pca,shewhart");
  bench->add_option("--seed", bench_run.seed, "root seed");
  bench->add_option("--threads", bench_run.threads, "worker threads (0 = auto)");
  bench->add_option("--max-outer", bench_run.fista.max_outer, "outer iteration cap");
  bench->add_option("--max-inner", bench_run.fista.max_inner, "inner iteration cap");
  bench->add_option("--outer-tol", bench_run.fista.outer_tol, "outer tolerance");
  bench->add_option("--out", bench_out, "benchmark CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems exit 1, --help exits 0
  }

  if (sim->parsed()) {
    if (sim_cfg.hot_cells.empty() && !sim_no_hot && sim_cfg.delta > 0.0)
      sim_cfg.hot_cells = ssr::default_hot_cells(sim_cfg.n1, sim_cfg.n2);
    const ssr::Tensor3 data = ssr::generate(sim_cfg);
    std::vector<int> years(sim_cfg.horizon);
    for (int t = 0; t < sim_cfg.horizon; ++t) years[t] = t + 1;
    OutputGuard guard;
    guard.add(sim_out);
    ssr::write_values_csv(sim_out, data, ssr::synthetic_labels(sim_cfg.n1), years);
    guard.dismiss();
    std::cout << "wrote " << sim_out << " (" << sim_cfg.n1 << " x " << sim_cfg.n2
              << " x " << sim_cfg.horizon << ")\n";
    return 0;
  }

  if (fitcmd->parsed()) {
    const ssr::IngestResult data = load_data(fit_data);
    for (const auto& w : data.coverage.warnings) std::cerr << "warning: " << w << '\n';
    const ssr::Dims dims = data.tensor.dims();
    ssr::BasisSet mean{spatial_kernel(fit_kernel, data),
                       ssr::Matrix::Identity(dims.n2, dims.n2),
                       ssr::Matrix::Identity(dims.n3, dims.n3),
                       ssr::BasisRole::mean};
    ssr::BasisSet hot = ssr::BasisSet::identity(dims, ssr::BasisRole::hotspot);
    const ssr::DifferenceSet diffs = ssr::DifferenceSet::standard(dims);
    const ssr::ModelFit mf = ssr::fit(data.tensor, mean, hot, diffs, fit_l1,
                                      fit_l2, fit_fista, fit_ridge);
    OutputGuard guard;
    const std::string theta_path = fit_prefix + "_theta_h.csv";
    const std::string resid_path = fit_prefix + "_residual.csv";
    const std::string obj_path = fit_prefix + "_objective.json";
    guard.add(theta_path);
    guard.add(resid_path);
    guard.add(obj_path);
    ssr::write_coefficients_csv(theta_path, mf.theta_h, data.labels, data.years);
    ssr::write_coefficients_csv(resid_path, mf.residual, data.labels, data.years);
    ssr::write_objective_json(obj_path, mf);
    guard.dismiss();
    std::cout << "objective " << mf.objective << " after " << mf.iterations_used
              << " iterations\n";
    return 0;
  }

  if (cal->parsed()) {
    const ssr::Matrix dist = ssr::synthetic_unit_distances(cal_n1);
    ssr::Pipeline pipe;
    pipe.mean_spatial =
        cal_bandwidth > 0.0
            ? ssr::gaussian_kernel_basis(dist, cal_bandwidth)
            : ssr::simulation_kernel_basis(cal_n1, 1.0);
    pipe.mean_weekly = ssr::Matrix::Identity(cal_n2, cal_n2);
    pipe.hot_spatial = ssr::Matrix::Identity(cal_n1, cal_n1);
    pipe.hot_weekly = ssr::Matrix::Identity(cal_n2, cal_n2);
    pipe.ridge_scale = cal_ridge;
    pipe.fista = cal_fista;
    const ssr::LambdaGrid grid = grid_from(cal_l1, cal_l2);
    ssr::SimConfig base;
    base.n1 = cal_n1;
    base.n2 = cal_n2;
    base.horizon = cal_years;
    base.tau = 1;
    base.delta = 0.0;
    base.sigma = cal_sigma;
    const auto source = [&](std::uint64_t rep_seed) {
      ssr::SimConfig c = base;
      c.coeff_seed = ssr::mix_seed(rep_seed, 1);
      c.noise_seed = ssr::mix_seed(rep_seed, 2);
      return ssr::generate(c);
    };
    const ssr::Phase1Result phase1 = ssr::phase1_calibrate(
        source, grid, cal_reps, pipe, cal_seed, cal_threads);
    const double limit = ssr::calibrate_limit(
        ssr::bootstrap_stream(phase1.p_tilde_pool), cal_allowance, cal_arl0,
        cal_limit_reps, ssr::mix_seed(cal_seed, 99), cal_threads);
    ssr::CalibrationArtifact artifact{grid, phase1.stats, cal_allowance, limit,
                                      cal_arl0, cal_seed, cal_reps};
    OutputGuard guard;
    guard.add(cal_out);
    ssr::save_calibration(cal_out, artifact);
    guard.dismiss();
    std::cout << "calibrated limit " << limit << " for ARL0 " << cal_arl0
              << " over " << phase1.stats.n_phase1 << " phase-1 samples\n";
    return 0;
  }

  if (mon->parsed()) {
    ssr::IngestResult data = load_data(mon_data);
    for (const auto& w : data.coverage.warnings) std::cerr << "warning: " << w << '\n';
    if (mon_downward) data.tensor.values() = -data.tensor.values();
    const ssr::CalibrationArtifact calib = ssr::load_calibration(mon_calib);
    const ssr::Dims dims = data.tensor.dims();
    ssr::Pipeline pipe;
    pipe.mean_spatial = spatial_kernel(mon_kernel, data);
    pipe.mean_weekly = ssr::Matrix::Identity(dims.n2, dims.n2);
    pipe.hot_spatial = ssr::Matrix::Identity(dims.n1, dims.n1);
    pipe.hot_weekly = ssr::Matrix::Identity(dims.n2, dims.n2);
    pipe.ridge_scale = mon_ridge;
    pipe.fista = mon_fista;
    const ssr::CusumConfig ccfg{calib.allowance, calib.limit, calib.target_arl0};
    const ssr::MonitorResult result =
        ssr::monitor_run(data.tensor, pipe, calib.grid, calib.stats, ccfg);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

    OutputGuard guard;
    const std::string det_path = mon_prefix + "_detection.json";
    const std::string cusum_path = mon_prefix + "_cusum.csv";
    const std::string report_path = mon_prefix + "_report.json";
    const std::string cells_path = mon_prefix + "_cells.csv";
    guard.add(det_path);
    guard.add(cusum_path);
    guard.add(report_path);
    guard.add(cells_path);
    ssr::write_cusum_csv(cusum_path, result.history, calib.limit);
    ssr::write_detection_json(det_path, result, data.years, cusum_path, cells_path);
    ssr::HotspotReport report;
    if (result.t_star && result.winner_fit)
      report = ssr::localize(*result.winner_fit, result.winner, *result.t_star);
    ssr::write_report_json(report_path, report, data.labels, data.years);
    ssr::write_cells_csv(cells_path, report, data.labels, data.years);
    guard.dismiss();
    if (result.t_star)
      std::cout << "signal at year index " << *result.t_star << " ("
                << report.cells.size() << " cells)\n";
    else
      std::cout << "no signal within the horizon\n";
    return 0;
  }

  if (bench->parsed()) {
    bench_run.base.delta = bench_delta;
    bench_run.base.hot_cells =
        ssr::default_hot_cells(bench_run.base.n1, bench_run.base.n2);
    bench_run.methods.clear();
    for (const auto& name : bench_methods) {
      if (name == "ssr") bench_run.methods.push_back(ssr::Method::ssr);
      else if (name == "t2") bench_run.methods.push_back(ssr::Method::t2);
      else if (name == "pca") bench_run.methods.push_back(ssr::Method::pca);
      else if (name == "shewhart") bench_run.methods.push_back(ssr::Method::shewhart);
      else throw std::invalid_argument("unknown method '" + name + "'");
    }
    const ssr::BenchmarkResult result = ssr::benchmark(bench_run);
    OutputGuard guard;
    guard.add(bench_out);
    ssr::write_benchmark_csv(bench_out, result);
    guard.dismiss();
    for (const auto& row : result.rows)
      std::cout << row.method << ": arl1 " << row.arl1 << " recall " << row.recall
                << " precision " << row.precision << '\n';
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ssr::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ssr::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
