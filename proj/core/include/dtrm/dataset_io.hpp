// Trajectory buffer file: a JSON header line carrying the format version and
// the scenario registry, then one compact JSON record per trajectory.
// Returns-to-go are recomputed on load, never stored.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dtrm/scenario.hpp"
#include "dtrm/trajectory.hpp"

namespace dtrm {

inline constexpr int kDatasetFormatVersion = 1;

struct Dataset {
  std::string task;  // "irs" | "uav"
  std::map<std::string, ScenarioSpec> scenarios;
  std::vector<Trajectory> trajectories;
};

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dtrm
