#include "nemo/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "nemo/csv.hpp"
#include "nemo/error.hpp"

namespace nemo {

namespace fs = std::filesystem;

namespace {

constexpr const char* kAxisNames[6] = {"fx", "fy", "fz", "tx", "ty", "tz"};

int residual_rank(const std::string& name) {
  try {
    return static_cast<int>(parse_residual_variant(name));
  } catch (const Error&) {
    return 1000;
  }
}

int scenario_index(const std::string& name) {
  for (int i = 0; i < 4; ++i) {
    if (to_string(kAllScenarios[i]) == name) return i;
  }
  return -1;
}

// MO first, then NeMO by increasing alpha.
std::pair<int, int> observer_rank(const SeriesRecord& r) { return {r.observer == "MO" ? 0 : 1, r.alpha}; }

std::vector<double> error_norms(const ObserverSeries& s) {
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = (s.estimate[k] - s.truth[k]).norm();
  return out;
}

std::string box_csv(const std::vector<BoxRow>& rows, const char* group_name) {
  std::ostringstream os;
  os << "observer," << group_name << ",count,min,q1,median,q3,max,mean\n";
  for (const auto& r : rows) {
    const auto& s = r.stats;
    os << r.observer << ',' << r.group << ',' << s.count << ',' << csv::format(s.min) << ',' << csv::format(s.q1)
       << ',' << csv::format(s.median) << ',' << csv::format(s.q3) << ',' << csv::format(s.max) << ','
       << csv::format(s.mean) << '\n';
  }
  return os.str();
}

}  // namespace

std::string SeriesRecord::label() const {
  return observer == "MO" ? std::string("MO") : observer + "(a=" + std::to_string(alpha) + ")";
}

AxisStats summarize(std::vector<double> values) {
  AxisStats s;
  s.count = values.size();
  if (values.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.min = s.q1 = s.median = s.q3 = s.max = s.mean = nan;
    return s;
  }
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  return s;
}

std::array<AxisStats, 6> per_axis_distributions(const ObserverSeries& series) {
  std::array<AxisStats, 6> out;
  std::vector<double> e(series.size());
  for (int a = 0; a < 6; ++a) {
    for (std::size_t k = 0; k < series.size(); ++k) e[k] = series.estimate[k](a) - series.truth[k](a);
    out[static_cast<std::size_t>(a)] = summarize(e);
  }
  return out;
}

double rms_error(const std::vector<const ObserverSeries*>& series) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto* s : series) {
    for (std::size_t k = 0; k < s->size(); ++k) sum += (s->estimate[k] - s->truth[k]).squaredNorm();
    n += s->size();
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(sum / static_cast<double>(n));
}

double rms_error(const ObserverSeries& series) { return rms_error(std::vector<const ObserverSeries*>{&series}); }

MetricsReport compute_report(const std::vector<SeriesRecord>& records) {
  std::vector<const SeriesRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const SeriesRecord* a, const SeriesRecord* b) {
    return std::make_tuple(residual_rank(a->residual), a->residual, observer_rank(*a), scenario_index(a->scenario)) <
           std::make_tuple(residual_rank(b->residual), b->residual, observer_rank(*b), scenario_index(b->scenario));
  });

  // Observer labels in display order.
  std::vector<std::string> labels;
  {
    std::vector<const SeriesRecord*> by_obs = sorted;
    std::stable_sort(by_obs.begin(), by_obs.end(), [](const SeriesRecord* a, const SeriesRecord* b) {
      return observer_rank(*a) < observer_rank(*b);
    });
    for (const auto* r : by_obs) {
      if (std::find(labels.begin(), labels.end(), r->label()) == labels.end()) labels.push_back(r->label());
    }
  }

  MetricsReport report;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  // RMS table: one row per (residual, observer).
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    RmsRow row{sorted[i]->residual, sorted[i]->label(), {nan, nan, nan, nan}, nan};
    std::vector<const ObserverSeries*> all;
    while (j < sorted.size() && sorted[j]->residual == row.residual && sorted[j]->label() == row.observer) {
      const int si = scenario_index(sorted[j]->scenario);
      if (si >= 0) row.scenario[static_cast<std::size_t>(si)] = rms_error(sorted[j]->series);
      all.push_back(&sorted[j]->series);
      ++j;
    }
    row.all = rms_error(all);
    report.rms.push_back(row);
    i = j;
  }

  std::vector<std::string> residuals;
  for (const auto* r : sorted) {
    if (std::find(residuals.begin(), residuals.end(), r->residual) == residuals.end()) residuals.push_back(r->residual);
  }

  for (const auto& label : labels) {
    for (int a = 0; a < 6; ++a) {
      std::vector<double> e;
      for (const auto* r : sorted) {
        if (r->label() != label) continue;
        for (std::size_t k = 0; k < r->series.size(); ++k) e.push_back(r->series.estimate[k](a) - r->series.truth[k](a));
      }
      report.per_axis.push_back({label, kAxisNames[a], summarize(std::move(e))});
    }
    for (FlyingScenario sc : kAllScenarios) {
      std::vector<double> e;
      bool seen = false;
      for (const auto* r : sorted) {
        if (r->label() != label || r->scenario != to_string(sc)) continue;
        seen = true;
        const auto n = error_norms(r->series);
        e.insert(e.end(), n.begin(), n.end());
      }
      if (seen) report.per_scenario.push_back({label, to_string(sc), summarize(std::move(e))});
    }
    for (const auto& res : residuals) {
      std::vector<double> e;
      bool seen = false;
      for (const auto* r : sorted) {
        if (r->label() != label || r->residual != res) continue;
        seen = true;
        const auto n = error_norms(r->series);
        e.insert(e.end(), n.begin(), n.end());
      }
      if (seen) report.per_residual.push_back({label, res, summarize(std::move(e))});
    }
  }
  return report;
}

void report_render(const MetricsReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("report: cannot create '" + dir + "': " + ec.message());

  std::ostringstream os;
  os << "# All: RMS of the 6-D error norm over the concatenated scenario series\n";
  os << "residual,observer";
  for (FlyingScenario s : kAllScenarios) os << ',' << to_string(s);
  os << ",All\n";
  for (const auto& r : report.rms) {
    os << r.residual << ',' << r.observer;
    for (double v : r.scenario) os << ',' << csv::format(v);
    os << ',' << csv::format(r.all) << '\n';
  }
  const fs::path base(dir);
  csv::write_file((base / "rms_table.csv").string(), os.str());
  csv::write_file((base / "boxplot_per_axis.csv").string(), box_csv(report.per_axis, "axis"));
  csv::write_file((base / "boxplot_per_scenario.csv").string(), box_csv(report.per_scenario, "scenario"));
  csv::write_file((base / "boxplot_per_residual.csv").string(), box_csv(report.per_residual, "residual"));
}

std::vector<RmsRow> read_rms_table(const std::string& path) {
  const auto lines = csv::data_lines(csv::read_file(path));
  if (lines.empty()) throw SchemaMismatch("rms table: missing header");
  std::vector<RmsRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = csv::split(lines[i]);
    if (f.size() != 7) throw SchemaMismatch("rms table: expected 7 columns");
    RmsRow r{f[0], f[1], {}, 0.0};
    for (std::size_t s = 0; s < 4; ++s) r.scenario[s] = csv::parse_double(f[2 + s]);
    r.all = csv::parse_double(f[6]);
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::string series_header() {
  std::string h = "t";
  for (const char* a : kAxisNames) h += std::string(",what_") + a;
  for (const char* a : kAxisNames) h += std::string(",wtrue_") + a;
  return h + ",observer,residual,alpha,scenario";
}

}  // namespace

void write_series_csv(const std::vector<SeriesRecord>& records, const std::string& path) {
  std::string out = series_header() + "\n";
  for (const auto& r : records) {
    const std::string tags = "," + r.observer + "," + r.residual + "," + std::to_string(r.alpha) + "," + r.scenario;
    for (std::size_t k = 0; k < r.series.size(); ++k) {
      out += csv::format(r.series.t[k]);
      for (int a = 0; a < 6; ++a) (out += ',') += csv::format(r.series.estimate[k](a));
      for (int a = 0; a < 6; ++a) (out += ',') += csv::format(r.series.truth[k](a));
      out += tags;
      out += '\n';
    }
  }
  csv::write_file(path, out);
}

std::vector<SeriesRecord> read_series_csv(const std::string& path) {
  const auto lines = csv::data_lines(csv::read_file(path));
  if (lines.empty() || lines[0] != series_header()) throw SchemaMismatch("series '" + path + "': unexpected header");
  std::vector<SeriesRecord> out;
  std::map<std::tuple<std::string, std::string, int, std::string>, std::size_t> index;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = csv::split(lines[i]);
    if (f.size() != 17) throw SchemaMismatch("series '" + path + "': expected 17 columns");
    const int alpha = static_cast<int>(csv::parse_double(f[15]));
    const auto key = std::make_tuple(f[13], f[14], alpha, f[16]);
    auto it = index.find(key);
    if (it == index.end()) {
      SeriesRecord r;
      r.observer = f[13];
      r.residual = f[14];
      r.alpha = alpha;
      r.scenario = f[16];
      out.push_back(std::move(r));
      it = index.emplace(key, out.size() - 1).first;
    }
    auto& s = out[it->second].series;
    Wrench est, tru;
    for (int a = 0; a < 6; ++a) {
      est(a) = csv::parse_double(f[static_cast<std::size_t>(1 + a)]);
      tru(a) = csv::parse_double(f[static_cast<std::size_t>(7 + a)]);
    }
    s.t.push_back(csv::parse_double(f[0]));
    s.estimate.push_back(est);
    s.truth.push_back(tru);
  }
  return out;
}

std::vector<SeriesRecord> read_series_dir(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("series: '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SeriesRecord> out;
  std::set<std::tuple<std::string, std::string, std::string, int>> seen;
  for (const auto& f : files) {
    for (auto& r : read_series_csv(f.string())) {
      if (seen.insert({r.scenario, r.residual, r.observer, r.alpha}).second) out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<Episode> simulate_test_episodes(const ExperimentConfig& config, ResidualVariant residual) {
  SimulationSetup setup = config.sim;
  setup.residual = ResidualSpec::preset(residual);
  return run_episodes(test_configs(setup));
}

std::vector<SeriesRecord> evaluate_observers(const std::vector<Episode>& episodes, const VehicleParams& true_params,
                                             const ResidualSpec& residual, const ObserverGains& gains,
                                             const std::vector<std::pair<int, const KnodeModel*>>& models) {
  const VehicleParams nominal = perturb_params(true_params, residual);
  const std::string res_name = to_string(residual.variant);
  std::vector<SeriesRecord> out;
  for (const auto& ep : episodes) {
    ObserverConfig mo{ObserverKind::MO, gains, nominal, std::nullopt};
    out.push_back({ep.meta.scenario, res_name, "MO", 0, run_observer(ep, mo)});
    for (const auto& [alpha, model] : models) {
      ObserverConfig cfg{ObserverKind::NeMO, gains, model->nominal.params(), model->net};
      out.push_back({ep.meta.scenario, res_name, "NeMO", alpha, run_observer(ep, cfg)});
    }
  }
  return out;
}

MatrixResult run_matrix(const ExperimentConfig& config, const ModelTable& models) {
  for (auto r : config.residuals) {
    for (int a : config.alphas) {
      if (!models.count({r, a})) {
        throw MissingCheckpoint("no trained model for residual " + to_string(r) + " alpha " + std::to_string(a));
      }
    }
  }
  MatrixResult result;
  for (auto r : config.residuals) {
    const auto episodes = simulate_test_episodes(config, r);
    std::vector<std::pair<int, const KnodeModel*>> cell;
    for (int a : config.alphas) cell.emplace_back(a, &models.at({r, a}));
    auto recs = evaluate_observers(episodes, config.sim.vehicle, ResidualSpec::preset(r), config.observer, cell);
    for (auto& rec : recs) result.records.push_back(std::move(rec));
  }
  result.report = compute_report(result.records);
  return result;
}

}  // namespace nemo
