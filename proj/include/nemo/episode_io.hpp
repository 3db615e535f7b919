#pragma once

#include <string>
#include <vector>

#include "nemo/simulator.hpp"

namespace nemo {

inline constexpr int kEpisodeSchemaVersion = 1;

/// Writes one CSV per episode plus manifest.json into `dir` (created if missing).
/// Columns: t, p(3), R(9, row-major), v(6), gamma(n), w_e(6).
void export_episodes(const std::vector<Episode>& episodes, const std::string& dir);

/// Inverse of export_episodes. Throws IoError or SchemaMismatch.
std::vector<Episode> import_episodes(const std::string& dir);

std::string episode_csv_header(int rotor_count);

}  // namespace nemo
