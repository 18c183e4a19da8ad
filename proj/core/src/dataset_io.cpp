#include "dtrm/dataset_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json_util.hpp"

namespace dtrm {

using nlohmann::json;

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path.string());

  json header;
  header["format_version"] = kDatasetFormatVersion;
  header["task"] = dataset.task;
  json registry = json::object();
  for (const auto& [id, spec] : dataset.scenarios) registry[id] = scenario_to_json(spec);
  header["scenarios"] = registry;
  out << header.dump() << '\n';

  for (const Trajectory& t : dataset.trajectories) {
    if (!dataset.scenarios.count(t.scenario_id)) {
      throw std::invalid_argument("dataset: trajectory references unregistered scenario " +
                                  t.scenario_id);
    }
    t.validate();
    json rec;
    rec["scenario_id"] = t.scenario_id;
    rec["expert"] = t.expert;
    rec["states"] = t.states;
    json disc = json::array(), cont = json::array();
    for (const HybridAction& a : t.actions) {
      disc.push_back(a.discrete);
      cont.push_back(a.continuous);
    }
    rec["discrete"] = disc;
    rec["continuous"] = cont;
    rec["rewards"] = t.rewards;
    out << rec.dump() << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: missing header line");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("dataset: corrupt header: ") + e.what());
  }
  const int version = header.at("format_version").get<int>();
  if (version != kDatasetFormatVersion) {
    throw std::runtime_error("dataset: unsupported format version " + std::to_string(version));
  }

  Dataset ds;
  ds.task = header.at("task").get<std::string>();
  for (const auto& [id, sj] : header.at("scenarios").items()) {
    ds.scenarios.emplace(id, scenario_from_json(sj));
  }

  int record = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++record;
    try {
      json rec = json::parse(line);
      Trajectory t;
      t.scenario_id = rec.at("scenario_id").get<std::string>();
      if (!ds.scenarios.count(t.scenario_id)) {
        throw std::runtime_error("unregistered scenario " + t.scenario_id);
      }
      t.expert = rec.at("expert").get<bool>();
      t.states = rec.at("states").get<std::vector<std::vector<double>>>();
      const auto disc = rec.at("discrete").get<std::vector<std::vector<int>>>();
      const auto cont = rec.at("continuous").get<std::vector<std::vector<double>>>();
      if (disc.size() != cont.size()) throw std::runtime_error("action arrays disagree");
      for (std::size_t i = 0; i < disc.size(); ++i) {
        t.actions.push_back(HybridAction{disc[i], cont[i]});
      }
      t.rewards = rec.at("rewards").get<std::vector<double>>();
      t.recompute_returns();  // never trusted from the file
      t.validate();
      ds.trajectories.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset: corrupt record " + std::to_string(record) + ": " +
                               e.what());
    }
  }
  return ds;
}

}  // namespace dtrm
