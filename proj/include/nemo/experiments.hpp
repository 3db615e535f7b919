#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nemo/config.hpp"
#include "nemo/knode.hpp"
#include "nemo/observers.hpp"

namespace nemo {

/// One observer run on one test episode.
struct SeriesRecord {
  std::string scenario;
  std::string residual;
  std::string observer;  // "MO" or "NeMO"
  int alpha = 0;         // 0 for MO
  ObserverSeries series;

  /// "MO" or "NeMO(a=<alpha>)".
  std::string label() const;
};

struct AxisStats {
  std::size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

/// Five-number summary with linearly interpolated quartiles, plus the mean.
AxisStats summarize(std::vector<double> values);

/// Signed estimation error per wrench axis.
std::array<AxisStats, 6> per_axis_distributions(const ObserverSeries& series);

/// sqrt(mean_k ||w_hat_k - w_k||^2) over the 6-D error.
double rms_error(const ObserverSeries& series);
/// Same, over the concatenation of several series.
double rms_error(const std::vector<const ObserverSeries*>& series);

struct RmsRow {
  std::string residual;
  std::string observer;            // label()
  std::array<double, 4> scenario;  // kAllScenarios order, NaN when absent
  double all = 0.0;
};

struct BoxRow {
  std::string observer;
  std::string group;  // axis, scenario or residual name
  AxisStats stats;
};

struct MetricsReport {
  std::vector<RmsRow> rms;
  std::vector<BoxRow> per_axis;      // signed error per axis
  std::vector<BoxRow> per_scenario;  // per-sample error norm
  std::vector<BoxRow> per_residual;  // per-sample error norm
};

MetricsReport compute_report(const std::vector<SeriesRecord>& records);

/// rms_table.csv, boxplot_per_axis.csv, boxplot_per_scenario.csv, boxplot_per_residual.csv.
void report_render(const MetricsReport& report, const std::string& dir);
std::vector<RmsRow> read_rms_table(const std::string& path);

void write_series_csv(const std::vector<SeriesRecord>& records, const std::string& path);
std::vector<SeriesRecord> read_series_csv(const std::string& path);
/// Every *.csv in dir in name order; a (scenario, residual, observer, alpha) key seen twice keeps the first.
std::vector<SeriesRecord> read_series_dir(const std::string& dir);

/// Test episodes of the four scenarios with the given residual in the plant.
std::vector<Episode> simulate_test_episodes(const ExperimentConfig& config, ResidualVariant residual);

/// MO plus one NeMO per model on every episode. All models must share `residual`.
std::vector<SeriesRecord> evaluate_observers(const std::vector<Episode>& episodes, const VehicleParams& true_params,
                                             const ResidualSpec& residual, const ObserverGains& gains,
                                             const std::vector<std::pair<int, const KnodeModel*>>& models);

using ModelTable = std::map<std::pair<ResidualVariant, int>, KnodeModel>;

struct MatrixResult {
  std::vector<SeriesRecord> records;
  MetricsReport report;
};

/// Every residual x alpha cell of the config; throws MissingCheckpoint naming the first absent cell.
MatrixResult run_matrix(const ExperimentConfig& config, const ModelTable& models);

}  // namespace nemo
