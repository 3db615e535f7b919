#include "nemo/episode_io.hpp"

#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "nemo/csv.hpp"

namespace nemo {

namespace fs = std::filesystem;
using nlohmann::json;

std::string episode_csv_header(int rotor_count) {
  std::string h = "t,px,py,pz";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) h += ",R" + std::to_string(r) + std::to_string(c);
  }
  h += ",vx,vy,vz,wx,wy,wz";
  for (int i = 0; i < rotor_count; ++i) h += ",gamma" + std::to_string(i);
  h += ",fx,fy,fz,tx,ty,tz";
  return h;
}

namespace {

std::string episode_to_csv(const Episode& ep) {
  std::string out = episode_csv_header(ep.rotor_count());
  out += '\n';
  auto put = [&out](double v) {
    out += ',';
    out += csv::format(v);
  };
  for (std::size_t i = 0; i < ep.size(); ++i) {
    out += csv::format(ep.t[i]);
    const State& s = ep.states[i];
    for (int k = 0; k < 3; ++k) put(s.p(k));
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) put(s.R(r, c));
    }
    for (int k = 0; k < 6; ++k) put(s.v(k));
    for (Eigen::Index k = 0; k < ep.inputs[i].size(); ++k) put(ep.inputs[i](k));
    for (int k = 0; k < 6; ++k) put(ep.wrenches[i](k));
    out += '\n';
  }
  return out;
}

void csv_to_episode(const std::string& contents, int rotor_count, Episode& ep) {
  const auto lines = csv::data_lines(contents);
  if (lines.empty() || lines.front() != episode_csv_header(rotor_count)) {
    throw SchemaMismatch("episode csv: header does not match rotor count " + std::to_string(rotor_count));
  }
  const std::size_t cols = 1 + 3 + 9 + 6 + static_cast<std::size_t>(rotor_count) + 6;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = csv::split(lines[li]);
    if (f.size() != cols) throw SchemaMismatch("episode csv: wrong column count on line " + std::to_string(li + 1));
    std::size_t c = 0;
    auto next = [&]() { return csv::parse_double(f[c++]); };
    ep.t.push_back(next());
    State s;
    for (int k = 0; k < 3; ++k) s.p(k) = next();
    for (int r = 0; r < 3; ++r) {
      for (int cc = 0; cc < 3; ++cc) s.R(r, cc) = next();
    }
    for (int k = 0; k < 6; ++k) s.v(k) = next();
    VecX gamma(rotor_count);
    for (int k = 0; k < rotor_count; ++k) gamma(k) = next();
    Wrench w;
    for (int k = 0; k < 6; ++k) w(k) = next();
    ep.states.push_back(s);
    ep.inputs.push_back(gamma);
    ep.wrenches.push_back(w);
  }
}

}  // namespace

void export_episodes(const std::vector<Episode>& episodes, const std::string& dir) {
  if (dir.empty()) throw IoError("export_episodes: empty directory");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("export_episodes: cannot create '" + dir + "': " + ec.message());

  json manifest;
  manifest["schema_version"] = kEpisodeSchemaVersion;
  manifest["episodes"] = json::array();
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = episodes[i];
    std::ostringstream name;
    name << "episode_" << i << ".csv";
    csv::write_file((fs::path(dir) / name.str()).string(), episode_to_csv(ep));
    manifest["episodes"].push_back(json{{"file", name.str()},
                                        {"scenario", ep.meta.scenario},
                                        {"seed", ep.meta.seed},
                                        {"sample_time", ep.sample_time},
                                        {"samples", ep.size()},
                                        {"rotor_count", ep.rotor_count()},
                                        {"vehicle", ep.meta.vehicle},
                                        {"residual", ep.meta.residual}});
  }
  csv::write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::vector<Episode> import_episodes(const std::string& dir) {
  if (dir.empty()) throw IoError("import_episodes: empty directory");
  const std::string text = csv::read_file((fs::path(dir) / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("manifest: ") + e.what());
  }
  if (!manifest.contains("schema_version") || manifest["schema_version"] != kEpisodeSchemaVersion) {
    throw SchemaMismatch("manifest: unsupported schema_version");
  }
  std::vector<Episode> out;
  try {
    for (const auto& entry : manifest.at("episodes")) {
      Episode ep;
      ep.sample_time = entry.at("sample_time").get<double>();
      ep.meta.scenario = entry.at("scenario").get<std::string>();
      ep.meta.seed = entry.at("seed").get<std::uint64_t>();
      ep.meta.vehicle = entry.at("vehicle").get<VehicleParams>();
      ep.meta.residual = entry.at("residual").get<ResidualSpec>();
      const int n = entry.at("rotor_count").get<int>();
      csv_to_episode(csv::read_file((fs::path(dir) / entry.at("file").get<std::string>()).string()), n, ep);
      if (ep.size() != entry.at("samples").get<std::size_t>()) {
        throw SchemaMismatch("episode csv: sample count differs from manifest");
      }
      out.push_back(std::move(ep));
    }
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("manifest: ") + e.what());
  }
  return out;
}

}  // namespace nemo
