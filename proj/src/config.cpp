#include "nemo/config.hpp"

#include "nemo/csv.hpp"
#include "nemo/error.hpp"

namespace nemo {

using nlohmann::json;

namespace {

Vec3 vec3_or(const json& j, const char* key, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (a.is_number()) return Vec3::Constant(a.get<double>());
  if (!a.is_array() || a.size() != 3) throw ConfigError(std::string(key) + ": expected number or 3-array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Vec6 vec6_or(const json& j, const char* key, const Vec6& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (a.is_number()) return Vec6::Constant(a.get<double>());
  if (!a.is_array() || a.size() != 6) throw ConfigError(std::string(key) + ": expected number or 6-array");
  Vec6 v;
  for (int i = 0; i < 6; ++i) v(i) = a[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json arr(const Eigen::Ref<const VecX>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

void ExperimentConfig::apply_seed(std::uint64_t base) {
  seed = base;
  sim.trajectories.train_seed = base;
  sim.trajectories.test_seed = base + 100000;
  training.seed = base;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("vehicle")) c.sim.vehicle = j.at("vehicle").get<VehicleParams>();
    if (j.contains("residual")) c.sim.residual = j.at("residual").get<ResidualSpec>();

    if (j.contains("trajectories")) {
      const auto& t = j.at("trajectories");
      auto& ts = c.sim.trajectories;
      ts.duration = t.value("duration", ts.duration);
      ts.train_hover = t.value("train_hover", ts.train_hover);
      ts.train_lemniscate = t.value("train_lemniscate", ts.train_lemniscate);
      ts.test_duration = t.value("test_duration", ts.test_duration);
      ts.scale_min = t.value("scale_min", ts.scale_min);
      ts.scale_max = t.value("scale_max", ts.scale_max);
      ts.period_min = t.value("period_min", ts.period_min);
      ts.period_max = t.value("period_max", ts.period_max);
      ts.max_plane_tilt_deg = t.value("max_plane_tilt_deg", ts.max_plane_tilt_deg);
      ts.hover_jitter = t.value("hover_jitter", ts.hover_jitter);
      c.sim.sample_time = t.value("sample_time", c.sim.sample_time);
      if (t.contains("pulses")) {
        const auto& p = t.at("pulses");
        c.sim.pulses.kind = WrenchProfile::Kind::Pulses;
        c.sim.pulses.pulse_times = p.value("times", c.sim.pulses.pulse_times);
        c.sim.pulses.width = p.value("width", c.sim.pulses.width);
        c.sim.pulses.amplitude = vec6_or(p, "amplitude", c.sim.pulses.amplitude);
      }
    }
    if (j.contains("controller")) {
      const auto& k = j.at("controller");
      auto& g = c.sim.controller;
      g.kp = vec3_or(k, "kp", g.kp);
      g.kd = vec3_or(k, "kd", g.kd);
      g.kr = vec3_or(k, "kr", g.kr);
      g.kw = vec3_or(k, "kw", g.kw);
      g.gamma_max = k.value("gamma_max", g.gamma_max);
    }
    if (j.contains("observer")) {
      const auto& o = j.at("observer");
      c.observer.k = vec6_or(o, "gain", c.observer.k);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      auto& tc = c.training;
      tc.alpha = t.value("alpha", tc.alpha);
      tc.batch_fraction = t.value("batch_fraction", tc.batch_fraction);
      tc.learning_rate = t.value("learning_rate", tc.learning_rate);
      tc.patience = t.value("patience", tc.patience);
      tc.max_epochs = t.value("max_epochs", tc.max_epochs);
      tc.validation_fraction = t.value("validation_fraction", tc.validation_fraction);
      tc.hidden = t.value("hidden", tc.hidden);
      if (t.contains("residuals")) {
        c.residuals.clear();
        for (const auto& r : t.at("residuals")) c.residuals.push_back(parse_residual_variant(r.get<std::string>()));
      }
      if (t.contains("alphas")) c.alphas = t.at("alphas").get<std::vector<int>>();
    }
    c.apply_seed(j.value("seed", std::uint64_t{1}));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.observer.validate();
  c.training.validate();
  c.sim.residual.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json residuals = json::array();
  for (auto r : c.residuals) residuals.push_back(to_string(r));
  const auto& ts = c.sim.trajectories;
  const auto& g = c.sim.controller;
  const auto& tc = c.training;
  return json{
      {"seed", c.seed},
      {"vehicle", c.sim.vehicle},
      {"residual", c.sim.residual},
      {"trajectories",
       {{"duration", ts.duration},
        {"train_hover", ts.train_hover},
        {"train_lemniscate", ts.train_lemniscate},
        {"test_duration", ts.test_duration},
        {"scale_min", ts.scale_min},
        {"scale_max", ts.scale_max},
        {"period_min", ts.period_min},
        {"period_max", ts.period_max},
        {"max_plane_tilt_deg", ts.max_plane_tilt_deg},
        {"hover_jitter", ts.hover_jitter},
        {"sample_time", c.sim.sample_time},
        {"pulses", {{"times", c.sim.pulses.pulse_times}, {"width", c.sim.pulses.width},
                    {"amplitude", arr(c.sim.pulses.amplitude)}}}}},
      {"controller",
       {{"kp", arr(g.kp)}, {"kd", arr(g.kd)}, {"kr", arr(g.kr)}, {"kw", arr(g.kw)}, {"gamma_max", g.gamma_max}}},
      {"observer", {{"gain", arr(c.observer.k)}}},
      {"training",
       {{"alpha", tc.alpha},
        {"batch_fraction", tc.batch_fraction},
        {"learning_rate", tc.learning_rate},
        {"patience", tc.patience},
        {"max_epochs", tc.max_epochs},
        {"validation_fraction", tc.validation_fraction},
        {"hidden", tc.hidden},
        {"residuals", residuals},
        {"alphas", c.alphas}}}};
}

ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(csv::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace nemo
