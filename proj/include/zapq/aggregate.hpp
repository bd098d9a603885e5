#pragma once

// Long-form run CSVs (run_id,n,metric,value) and their percentile reduction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "zapq/error.hpp"
#include "zapq/io.hpp"
#include "zapq/training.hpp"

namespace zapq {

inline const std::vector<double>& percentile_levels() {
  static const std::vector<double> levels{10, 25, 50, 75, 90};
  return levels;
}

/// Linear-interpolation percentile (Hyndman-Fan type 7) of an unsorted sample.
inline double percentile(std::vector<double> xs, double level) {
  require(!xs.empty(), ErrorCode::EmptyInput, "percentile: empty sample");
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * level / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= xs.size()) return xs.back();
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[lo + 1] - xs[lo]);
}

struct MetricRow {
  std::size_t run_id;
  std::uint64_t n;
  std::string metric;
  double value;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"avg_reward", "fbar_norm", "bellman_error", "mse_to_qstar"};
  return names;
}

inline double metric_value(const LearnRecord& r, const std::string& metric) {
  if (metric == "avg_reward") return r.avg_reward;
  if (metric == "fbar_norm") return r.fbar_norm;
  if (metric == "bellman_error") return r.bellman_error;
  if (metric == "mse_to_qstar") return r.mse_to_qstar;
  fail(ErrorCode::Config, "unknown metric '" + metric + "'");
}

/// Rows for every checkpoint and every requested metric; NaN values (metrics
/// that were not computed) are skipped.
inline std::vector<MetricRow> metric_rows(std::size_t run_id, const std::vector<LearnRecord>& records,
                                          const std::vector<std::string>& metrics) {
  std::vector<MetricRow> rows;
  for (const auto& r : records)
    for (const auto& m : metrics) {
      const double v = metric_value(r, m);
      if (!std::isnan(v)) rows.push_back({run_id, r.n, m, v});
    }
  return rows;
}

inline std::string run_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "run_id,n,metric,value\n";
  for (const auto& r : rows) out << r.run_id << ',' << r.n << ',' << r.metric << ',' << io::format_double(r.value) << '\n';
  return out.str();
}

inline std::vector<MetricRow> read_run_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "run_id,n,metric,value") fail(ErrorCode::Io, path + ": unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, n, metric, value;
    if (!std::getline(fields, id, ',') || !std::getline(fields, n, ',') || !std::getline(fields, metric, ',') ||
        !std::getline(fields, value))
      fail(ErrorCode::Io, path + ": malformed row '" + line + "'");
    try {
      rows.push_back({std::stoul(id), std::stoull(n), metric, std::stod(value)});
    } catch (const std::exception&) {
      fail(ErrorCode::Io, path + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

/// Percentile curves of one metric across runs, one row per checkpoint n.
struct AggregateResult {
  std::string metric;
  std::vector<std::uint64_t> n;
  std::vector<std::vector<double>> percentiles;  // [checkpoint][level]
  std::vector<std::size_t> runs;                 // runs contributing at each n

  bool empty() const { return n.empty(); }
};

inline AggregateResult aggregate(const std::vector<MetricRow>& rows, const std::string& metric) {
  std::map<std::uint64_t, std::vector<double>> by_n;
  for (const auto& r : rows)
    if (r.metric == metric) by_n[r.n].push_back(r.value);
  AggregateResult out;
  out.metric = metric;
  for (const auto& [n, values] : by_n) {
    out.n.push_back(n);
    std::vector<double> ps;
    for (double level : percentile_levels()) ps.push_back(percentile(values, level));
    out.percentiles.push_back(std::move(ps));
    out.runs.push_back(values.size());
  }
  return out;
}

inline std::string aggregate_csv(const AggregateResult& agg) {
  std::ostringstream out;
  out << "n";
  for (double level : percentile_levels()) out << ",p" << static_cast<int>(level);
  out << '\n';
  for (std::size_t k = 0; k < agg.n.size(); ++k) {
    out << agg.n[k];
    for (double v : agg.percentiles[k]) out << ',' << io::format_double(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace zapq
