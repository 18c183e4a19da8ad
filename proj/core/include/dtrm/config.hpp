// Run configuration: task, scenario list, model shape, schedules, and the
// input-file references each subcommand consumes.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtrm/dt_model.hpp"
#include "dtrm/ppo.hpp"
#include "dtrm/scenario.hpp"

namespace dtrm {

struct CollectOptions {
  long ppo_budget_steps = 40000;
  int episodes_per_scenario = 300;
  double expert_fraction = 0.5;  // greedy rollouts; the rest are sampled
  PpoConfig ppo;
};

struct PretrainOptions {
  DtTrainSchedule schedule;
};

struct FinetuneConfig {
  std::string scenario;
  int episodes = 50;
  long source_ppo_steps = 4096;  // from-scratch interaction budget before collection
  DtTrainSchedule schedule;
  FreezeSpec freeze;
};

struct EvaluateOptions {
  std::string scenario;
  int episodes = 100;
  // "dataset_max" or a number encoded as string
  std::string target_return = "dataset_max";
};

struct CompareOptions {
  std::string scenario;
  long budget_steps = 30000;
  int eval_episodes = 20;
  int fewshot_episodes = 50;
  int fewshot_chunk = 10;
  FinetuneConfig finetune;  // schedule/freeze reused per chunk
};

struct RunConfig {
  std::string task;  // "irs" | "uav"
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<ScenarioSpec> scenarios;
  DtConfig model;
  CollectOptions collect;
  PretrainOptions pretrain;
  FinetuneConfig finetune;
  EvaluateOptions evaluate;
  CompareOptions compare;
  std::filesystem::path dataset_path;
  std::filesystem::path checkpoint_path;

  const ScenarioSpec& scenario(const std::string& id) const;
  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Scenario (de)serialization shared by config files and dataset headers.
std::string scenario_to_json_string(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json_string(const std::string& json_text);

}  // namespace dtrm
