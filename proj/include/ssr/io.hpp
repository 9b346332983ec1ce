#pragma once

#include <string>
#include <vector>

#include "ssr/localizer.hpp"
#include "ssr/monitor.hpp"
#include "ssr/simlab.hpp"

namespace ssr {

struct CoverageReport {
  long missing_cells = 0;          // absent (unit, year, week) records
  long negative_corrections = 0;   // negative weekly differences clipped to 0
  std::vector<std::string> warnings;
};

struct IngestResult {
  Tensor3 tensor;                  // (units, weeks_kept, years)
  std::vector<std::string> labels; // unit labels, sorted
  std::vector<int> years;          // ascending
  CoverageReport coverage;
};

/// Reads cumulative weekly surveillance counts (header
/// unit,year,week,cumulative_count) and differences them into weekly new
/// cases. Week w of the output is cumulative[w+1] - cumulative[w]; the raw
/// final week only ever closes the last difference, which drops it from the
/// output. weeks_kept fixes n2; years with fewer differences are an error
/// unless pad_ragged is set, in which case they are zero-padded with a
/// coverage warning. Negative differences are recorded as 0 and flagged.
IngestResult ingest_csv(const std::string& path, int weeks_kept = 51,
                        bool pad_ragged = false);

/// Reads already-differenced weekly values (header unit,year,week,value),
/// the format written by write_values_csv / the simulate command.
IngestResult ingest_values_csv(const std::string& path);

/// Writes a tensor in the values-CSV format with full double precision, so a
/// read-back reproduces it bit-exactly.
void write_values_csv(const std::string& path, const Tensor3& t,
                      const std::vector<std::string>& labels,
                      const std::vector<int>& years);

/// n x n distance matrix with a header row of unit labels; rows follow the
/// header order. The result is reordered to match `expected_labels`.
Matrix read_distance_csv(const std::string& path,
                         const std::vector<std::string>& expected_labels);

void write_coefficients_csv(const std::string& path, const Tensor3& t,
                            const std::vector<std::string>& labels,
                            const std::vector<int>& years);

void write_objective_json(const std::string& path, const ModelFit& fit);

struct CalibrationArtifact {
  LambdaGrid grid;
  Phase1Stats stats;
  double allowance = 0.5;
  double limit = 0.0;
  double target_arl0 = 200.0;
  std::uint64_t seed = 0;
  int reps = 0;
};

void save_calibration(const std::string& path, const CalibrationArtifact& c);
CalibrationArtifact load_calibration(const std::string& path);

void write_cusum_csv(const std::string& path,
                     const std::vector<CusumStep>& history, double limit);

void write_detection_json(const std::string& path, const MonitorResult& result,
                          const std::vector<int>& years,
                          const std::string& cusum_path,
                          const std::string& cells_path);

void write_report_json(const std::string& path, const HotspotReport& report,
                       const std::vector<std::string>& labels,
                       const std::vector<int>& years);

void write_cells_csv(const std::string& path, const HotspotReport& report,
                     const std::vector<std::string>& labels,
                     const std::vector<int>& years);

void write_benchmark_csv(const std::string& path, const BenchmarkResult& result);

/// Default labels for simulated data: S01, S02, ...
std::vector<std::string> synthetic_labels(Index n1);

}  // namespace ssr
