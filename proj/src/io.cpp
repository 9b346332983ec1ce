#include "ssr/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ssr {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string trim(std::string s) {
  const auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(trim(s), &pos);
    if (pos != trim(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse " + what + " from '" + s + "'");
  }
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(trim(s), &pos);
    if (pos != trim(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse " + what + " from '" + s + "'");
  }
}

std::string full_precision(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RawRecords {
  // (unit, year) -> week -> value
  std::map<std::string, std::map<int, std::map<int, double>>> cells;
  std::vector<std::string> labels;
  std::vector<int> years;
};

RawRecords read_records(const std::string& path, const std::string& value_col,
                        bool integral) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = split_csv_line(trim(line));
  const std::vector<std::string> expected{"unit", "year", "week", value_col};
  if (header.size() != 4 || trim(header[0]) != "unit" ||
      trim(header[1]) != "year" || trim(header[2]) != "week" ||
      trim(header[3]) != value_col)
    throw DataError(path + ": expected header unit,year,week," + value_col);

  RawRecords raw;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 4 fields");
    const std::string unit = trim(fields[0]);
    const int year = static_cast<int>(parse_long(fields[1], "year"));
    const int week = static_cast<int>(parse_long(fields[2], "week"));
    if (week < 1 || week > 53)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": week must be in 1..53");
    double value;
    if (integral) {
      const long c = parse_long(fields[3], value_col);
      if (c < 0)
        throw DataError(path + ":" + std::to_string(lineno) + ": " + value_col +
                        " must be nonnegative");
      value = static_cast<double>(c);
    } else {
      value = parse_double(fields[3], value_col);
    }
    auto& weeks = raw.cells[unit][year];
    if (!weeks.emplace(week, value).second)
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate (" +
                      unit + ", " + std::to_string(year) + ", week " +
                      std::to_string(week) + ")");
  }
  if (raw.cells.empty()) throw DataError(path + ": no records");

  std::vector<int> years;
  for (const auto& [unit, by_year] : raw.cells) {
    raw.labels.push_back(unit);
    for (const auto& [year, weeks] : by_year)
      if (std::find(years.begin(), years.end(), year) == years.end())
        years.push_back(year);
  }
  std::sort(years.begin(), years.end());
  raw.years = std::move(years);
  return raw;
}

}  // namespace

IngestResult ingest_csv(const std::string& path, int weeks_kept,
                        bool pad_ragged) {
  if (weeks_kept < 1)
    throw std::invalid_argument("ingest_csv: weeks_kept must be >= 1");
  RawRecords raw = read_records(path, "cumulative_count", true);

  IngestResult out;
  out.labels = raw.labels;
  out.years = raw.years;
  const Index n1 = static_cast<Index>(out.labels.size());
  const Index n3 = static_cast<Index>(out.years.size());
  out.tensor = Tensor3(n1, weeks_kept, n3);

  for (Index u = 0; u < n1; ++u) {
    const auto& by_year = raw.cells[out.labels[u]];
    for (Index k = 0; k < n3; ++k) {
      const auto it = by_year.find(out.years[k]);
      if (it == by_year.end()) {
        out.coverage.missing_cells += weeks_kept;
        out.coverage.warnings.push_back("unit " + out.labels[u] + " year " +
                                        std::to_string(out.years[k]) +
                                        " absent; imputed zeros");
        continue;
      }
      const auto& weeks = it->second;
      const int max_week = weeks.rbegin()->first;
      if (max_week < weeks_kept + 1 && !pad_ragged)
        throw DataError("unit " + out.labels[u] + " year " +
                        std::to_string(out.years[k]) + " has only " +
                        std::to_string(max_week) + " raw weeks; need " +
                        std::to_string(weeks_kept + 1) +
                        " (enable padding to keep it)");
      // carry cumulative counts forward over missing weeks
      std::vector<double> cum(weeks_kept + 2, 0.0);
      for (int w = 1; w <= weeks_kept + 1; ++w) {
        const auto wit = weeks.find(w);
        if (wit != weeks.end()) {
          cum[w] = wit->second;
        } else {
          cum[w] = cum[w - 1];
          if (w <= max_week) ++out.coverage.missing_cells;
        }
      }
      if (max_week < weeks_kept + 1) {
        out.coverage.warnings.push_back(
            "unit " + out.labels[u] + " year " + std::to_string(out.years[k]) +
            " padded from week " + std::to_string(max_week + 1));
        out.coverage.missing_cells += weeks_kept + 1 - max_week;
      }
      for (int w = 1; w <= weeks_kept; ++w) {
        double diff = cum[w + 1] - cum[w];
        if (diff < 0.0) {
          diff = 0.0;
          ++out.coverage.negative_corrections;
        }
        out.tensor(u, w - 1, k) = diff;
      }
    }
  }
  if (out.coverage.negative_corrections > 0)
    out.coverage.warnings.push_back(
        std::to_string(out.coverage.negative_corrections) +
        " negative weekly differences clipped to 0");
  return out;
}

IngestResult ingest_values_csv(const std::string& path) {
  RawRecords raw = read_records(path, "value", false);
  IngestResult out;
  out.labels = raw.labels;
  out.years = raw.years;

  int max_week = 0;
  for (const auto& [unit, by_year] : raw.cells)
    for (const auto& [year, weeks] : by_year)
      max_week = std::max(max_week, weeks.rbegin()->first);

  const Index n1 = static_cast<Index>(out.labels.size());
  const Index n3 = static_cast<Index>(out.years.size());
  out.tensor = Tensor3(n1, max_week, n3);
  for (Index u = 0; u < n1; ++u) {
    const auto& by_year = raw.cells[out.labels[u]];
    for (Index k = 0; k < n3; ++k) {
      const auto it = by_year.find(out.years[k]);
      if (it == by_year.end()) {
        out.coverage.missing_cells += max_week;
        out.coverage.warnings.push_back("unit " + out.labels[u] + " year " +
                                        std::to_string(out.years[k]) +
                                        " absent; imputed zeros");
        continue;
      }
      for (int w = 1; w <= max_week; ++w) {
        const auto wit = it->second.find(w);
        if (wit == it->second.end()) {
          ++out.coverage.missing_cells;
          continue;
        }
        out.tensor(u, w - 1, k) = wit->second;
      }
    }
  }
  return out;
}

void write_values_csv(const std::string& path, const Tensor3& t,
                      const std::vector<std::string>& labels,
                      const std::vector<int>& years) {
  if (static_cast<Index>(labels.size()) != t.n1() ||
      static_cast<Index>(years.size()) != t.n3())
    throw ShapeError("write_values_csv: labels/years do not match tensor dims");
  std::ofstream out = open_output(path);
  out << "unit,year,week,value\n";
  for (Index u = 0; u < t.n1(); ++u)
    for (Index k = 0; k < t.n3(); ++k)
      for (Index w = 0; w < t.n2(); ++w)
        out << labels[u] << ',' << years[k] << ',' << (w + 1) << ','
            << full_precision(t(u, w, k)) << '\n';
}

Matrix read_distance_csv(const std::string& path,
                         const std::vector<std::string>& expected_labels) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::vector<std::string> header = split_csv_line(trim(line));
  for (auto& h : header) h = trim(h);
  const Index n = static_cast<Index>(header.size());
  Matrix file_dist(n, n);
  for (Index i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw DataError(path + ": expected " + std::to_string(n) + " rows");
    const auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != n)
      throw DataError(path + ": row " + std::to_string(i + 2) +
                      " has wrong field count");
    for (Index j = 0; j < n; ++j)
      file_dist(i, j) = parse_double(fields[j], "distance");
  }
  if (expected_labels.empty()) return file_dist;
  if (static_cast<Index>(expected_labels.size()) != n)
    throw DataError(path + ": has " + std::to_string(n) + " units, data has " +
                    std::to_string(expected_labels.size()));
  std::vector<Index> order(expected_labels.size());
  for (std::size_t i = 0; i < expected_labels.size(); ++i) {
    const auto it = std::find(header.begin(), header.end(), expected_labels[i]);
    if (it == header.end())
      throw DataError(path + ": unit '" + expected_labels[i] +
                      "' missing from distance header");
    order[i] = static_cast<Index>(it - header.begin());
  }
  Matrix dist(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) dist(i, j) = file_dist(order[i], order[j]);
  return dist;
}

void write_coefficients_csv(const std::string& path, const Tensor3& t,
                            const std::vector<std::string>& labels,
                            const std::vector<int>& years) {
  if (static_cast<Index>(labels.size()) != t.n1() ||
      static_cast<Index>(years.size()) != t.n3())
    throw ShapeError("write_coefficients_csv: labels/years mismatch");
  std::ofstream out = open_output(path);
  out << "unit,week,year,value\n";
  for (Index u = 0; u < t.n1(); ++u)
    for (Index w = 0; w < t.n2(); ++w)
      for (Index k = 0; k < t.n3(); ++k)
        out << labels[u] << ',' << (w + 1) << ',' << years[k] << ','
            << full_precision(t(u, w, k)) << '\n';
}

void write_objective_json(const std::string& path, const ModelFit& fit) {
  json j;
  j["objective"] = fit.objective;
  j["lambda1"] = fit.lambda1;
  j["lambda2"] = fit.lambda2;
  j["iterations"] = fit.iterations_used;
  j["converged"] = fit.converged;
  j["prox_converged"] = fit.prox_converged;
  open_output(path) << j.dump(2) << '\n';
}

void save_calibration(const std::string& path, const CalibrationArtifact& c) {
  json grid = json::array();
  for (std::size_t g = 0; g < c.grid.pairs.size(); ++g) {
    json e;
    e["lambda1"] = c.grid.pairs[g].lambda1;
    e["lambda2"] = c.grid.pairs[g].lambda2;
    e["mean"] = c.stats.per_pair[g].mean;
    e["var"] = c.stats.per_pair[g].var;
    e["usable"] = c.stats.per_pair[g].usable;
    grid.push_back(e);
  }
  json j;
  j["grid"] = grid;
  j["d"] = c.allowance;
  j["L"] = c.limit;
  j["target_arl0"] = c.target_arl0;
  j["seed"] = c.seed;
  j["reps"] = c.reps;
  j["n_phase1"] = c.stats.n_phase1;
  open_output(path) << j.dump(2) << '\n';
}

CalibrationArtifact load_calibration(const std::string& path) {
  json j;
  try {
    open_input(path) >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
  CalibrationArtifact c;
  try {
    for (const auto& e : j.at("grid")) {
      c.grid.pairs.push_back({e.at("lambda1").get<double>(),
                              e.at("lambda2").get<double>()});
      PairStats ps;
      ps.mean = e.at("mean").get<double>();
      ps.var = e.at("var").get<double>();
      ps.usable = e.at("usable").get<bool>();
      c.stats.per_pair.push_back(ps);
    }
    c.allowance = j.at("d").get<double>();
    c.limit = j.at("L").get<double>();
    c.target_arl0 = j.at("target_arl0").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.reps = j.at("reps").get<int>();
    c.stats.n_phase1 = j.value("n_phase1", 0L);
  } catch (const json::exception& e) {
    throw DataError(path + ": bad calibration document: " + e.what());
  }
  return c;
}

void write_cusum_csv(const std::string& path,
                     const std::vector<CusumStep>& history, double limit) {
  std::ofstream out = open_output(path);
  out << "t,p_tilde,W,limit\n";
  for (const auto& step : history)
    out << step.t << ',' << full_precision(step.p_tilde) << ','
        << full_precision(step.w) << ',' << full_precision(limit) << '\n';
}

void write_detection_json(const std::string& path, const MonitorResult& result,
                          const std::vector<int>& years,
                          const std::string& cusum_path,
                          const std::string& cells_path) {
  json j;
  if (result.t_star) {
    j["t_star"] = *result.t_star;
    const std::size_t idx = static_cast<std::size_t>(*result.t_star - 1);
    j["year_label"] = idx < years.size() ? json(years[idx]) : json();
  } else {
    j["t_star"] = nullptr;
    j["year_label"] = nullptr;
  }
  j["winner_lambda1"] = result.winner.lambda1;
  j["winner_lambda2"] = result.winner.lambda2;
  j["W_series_path"] = cusum_path;
  j["cells_path"] = cells_path;
  j["false_alarms"] = result.false_alarms;
  j["warnings"] = result.warnings;
  open_output(path) << j.dump(2) << '\n';
}

void write_report_json(const std::string& path, const HotspotReport& report,
                       const std::vector<std::string>& labels,
                       const std::vector<int>& years) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json e;
    e["state"] = c.state;
    e["label"] = (c.state >= 1 && c.state <= static_cast<int>(labels.size()))
                     ? json(labels[c.state - 1])
                     : json();
    e["week"] = c.week;
    e["magnitude"] = c.magnitude;
    cells.push_back(e);
  }
  json j;
  j["t_star"] = report.t_star;
  const std::size_t idx = static_cast<std::size_t>(report.t_star - 1);
  j["year_label"] = idx < years.size() ? json(years[idx]) : json();
  j["winner_lambda1"] = report.winner.lambda1;
  j["winner_lambda2"] = report.winner.lambda2;
  j["threshold"] = report.threshold;
  j["cells"] = cells;
  open_output(path) << j.dump(2) << '\n';
}

void write_cells_csv(const std::string& path, const HotspotReport& report,
                     const std::vector<std::string>& labels,
                     const std::vector<int>& years) {
  std::ofstream out = open_output(path);
  out << "state_label,week,year,magnitude\n";
  const std::size_t idx = static_cast<std::size_t>(report.t_star - 1);
  const std::string year = idx < years.size() ? std::to_string(years[idx])
                                              : std::to_string(report.t_star);
  for (const auto& c : report.cells) {
    const std::string label =
        (c.state >= 1 && c.state <= static_cast<int>(labels.size()))
            ? labels[c.state - 1]
            : std::to_string(c.state);
    out << label << ',' << c.week << ',' << year << ','
        << full_precision(c.magnitude) << '\n';
  }
}

void write_benchmark_csv(const std::string& path, const BenchmarkResult& result) {
  std::ofstream out = open_output(path);
  out << "method,delta,precision,precision_sd,recall,recall_sd,f_arith,"
         "f_harm,arl1,arl1_sd,reps,seed\n";
  const auto cell = [](double v) {
    return std::isfinite(v) ? full_precision(v) : std::string();
  };
  for (const auto& r : result.rows)
    out << r.method << ',' << full_precision(r.delta) << ',' << cell(r.precision)
        << ',' << cell(r.precision_sd) << ',' << cell(r.recall) << ','
        << cell(r.recall_sd) << ',' << cell(r.f_arith) << ',' << cell(r.f_harm)
        << ',' << cell(r.arl1) << ',' << cell(r.arl1_sd) << ',' << r.reps << ','
        << r.seed << '\n';
}

std::vector<std::string> synthetic_labels(Index n1) {
  std::vector<std::string> labels(n1);
  for (Index i = 0; i < n1; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "S%02ld", static_cast<long>(i + 1));
    labels[i] = buf;
  }
  return labels;
}

}  // namespace ssr
