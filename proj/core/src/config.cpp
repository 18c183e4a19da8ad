#include "dtrm/config.hpp"

#include <fstream>
#include <stdexcept>

#include "json_util.hpp"

namespace dtrm {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json scenario_to_json(const ScenarioSpec& spec) {
  json j;
  if (spec.task() == "irs") {
    const IrsScenario& s = spec.irs();
    j["task"] = "irs";
    j["id"] = s.id;
    j["num_elements"] = s.num_elements;
    j["phase_levels"] = s.phase_levels;
    j["power_levels"] = s.power_levels;
    j["alpha_direct"] = s.alpha_direct;
    j["alpha_bs_irs"] = s.alpha_bs_irs;
    j["alpha_irs_user"] = s.alpha_irs_user;
    j["rician_k"] = s.rician_k;
    j["noise_power"] = s.noise_power;
    j["episode_len"] = s.episode_len;
    j["bs_pos"] = s.bs_pos;
    j["irs_pos"] = s.irs_pos;
    j["user_pos"] = s.user_pos;
    j["ref_gain"] = s.ref_gain;
    j["time_corr"] = s.time_corr;
    j["wavelength"] = s.wavelength;
  } else {
    const UavScenario& s = spec.uav();
    j["task"] = "uav";
    j["id"] = s.id;
    j["num_uavs"] = s.num_uavs;
    j["num_users"] = s.num_users;
    j["region"] = s.region;
    j["uav_altitude"] = s.uav_altitude;
    j["uav_speed"] = s.uav_speed;
    j["workload_lo"] = s.workload_lo;
    j["workload_hi"] = s.workload_hi;
    j["episode_len"] = s.episode_len;
    j["alpha"] = s.alpha;
    j["snr_ref"] = s.snr_ref;
    j["bandwidth_mhz"] = s.bandwidth_mhz;
    j["slot_seconds"] = s.slot_seconds;
    j["mobility_eta"] = s.mobility_eta;
    j["mobility_mean_speed"] = s.mobility_mean_speed;
    j["mobility_std"] = s.mobility_std;
  }
  return j;
}

ScenarioSpec scenario_from_json(const json& j) {
  const std::string task = j.at("task").get<std::string>();
  if (task == "irs") {
    IrsScenario s;
    s.id = j.at("id").get<std::string>();
    maybe(j, "num_elements", s.num_elements);
    maybe(j, "phase_levels", s.phase_levels);
    maybe(j, "power_levels", s.power_levels);
    maybe(j, "alpha_direct", s.alpha_direct);
    maybe(j, "alpha_bs_irs", s.alpha_bs_irs);
    maybe(j, "alpha_irs_user", s.alpha_irs_user);
    maybe(j, "rician_k", s.rician_k);
    maybe(j, "noise_power", s.noise_power);
    maybe(j, "episode_len", s.episode_len);
    maybe(j, "bs_pos", s.bs_pos);
    maybe(j, "irs_pos", s.irs_pos);
    maybe(j, "user_pos", s.user_pos);
    maybe(j, "ref_gain", s.ref_gain);
    maybe(j, "time_corr", s.time_corr);
    maybe(j, "wavelength", s.wavelength);
    s.validate();
    return ScenarioSpec{s};
  }
  if (task == "uav") {
    UavScenario s;
    s.id = j.at("id").get<std::string>();
    maybe(j, "num_uavs", s.num_uavs);
    maybe(j, "num_users", s.num_users);
    maybe(j, "region", s.region);
    maybe(j, "uav_altitude", s.uav_altitude);
    maybe(j, "uav_speed", s.uav_speed);
    maybe(j, "workload_lo", s.workload_lo);
    maybe(j, "workload_hi", s.workload_hi);
    maybe(j, "episode_len", s.episode_len);
    maybe(j, "alpha", s.alpha);
    maybe(j, "snr_ref", s.snr_ref);
    maybe(j, "bandwidth_mhz", s.bandwidth_mhz);
    maybe(j, "slot_seconds", s.slot_seconds);
    maybe(j, "mobility_eta", s.mobility_eta);
    maybe(j, "mobility_mean_speed", s.mobility_mean_speed);
    maybe(j, "mobility_std", s.mobility_std);
    s.validate();
    return ScenarioSpec{s};
  }
  throw std::invalid_argument("unknown scenario task: " + task);
}

std::string scenario_to_json_string(const ScenarioSpec& spec) {
  return scenario_to_json(spec).dump();
}

ScenarioSpec scenario_from_json_string(const std::string& text) {
  return scenario_from_json(json::parse(text));
}

namespace {

DtTrainSchedule schedule_from_json(const json& j, DtTrainSchedule base) {
  maybe(j, "steps", base.steps);
  maybe(j, "batch_size", base.batch_size);
  maybe(j, "lr", base.lr);
  maybe(j, "weight_decay", base.weight_decay);
  maybe(j, "nonexpert_weight", base.nonexpert_weight);
  return base;
}

PpoConfig ppo_from_json(const json& j, PpoConfig base) {
  maybe(j, "clip_eps", base.clip_eps);
  maybe(j, "gamma", base.gamma);
  maybe(j, "gae_lambda", base.gae_lambda);
  maybe(j, "epochs", base.epochs);
  maybe(j, "rollout_batch", base.rollout_batch);
  maybe(j, "minibatch", base.minibatch);
  maybe(j, "entropy_coef", base.entropy_coef);
  maybe(j, "value_coef", base.value_coef);
  maybe(j, "lr", base.lr);
  maybe(j, "hidden_dim", base.hidden_dim);
  maybe(j, "expert_percentile", base.expert_percentile);
  maybe(j, "expert_window_episodes", base.expert_window_episodes);
  return base;
}

FinetuneConfig finetune_from_json(const json& j, FinetuneConfig base) {
  maybe(j, "scenario", base.scenario);
  maybe(j, "episodes", base.episodes);
  maybe(j, "source_ppo_steps", base.source_ppo_steps);
  if (j.contains("schedule")) base.schedule = schedule_from_json(j.at("schedule"), base.schedule);
  if (j.contains("freeze")) {
    base.freeze.frozen_prefixes = j.at("freeze").get<std::vector<std::string>>();
  }
  return base;
}

}  // namespace

const ScenarioSpec& RunConfig::scenario(const std::string& id) const {
  for (const ScenarioSpec& s : scenarios) {
    if (s.id() == id) return s;
  }
  throw std::invalid_argument("config does not define scenario: " + id);
}

void RunConfig::validate() const {
  if (task != "irs" && task != "uav") throw std::invalid_argument("config: task must be irs|uav");
  if (!seed_set) throw std::invalid_argument("config: seed is required");
  if (scenarios.empty()) throw std::invalid_argument("config: no scenarios defined");
  for (const ScenarioSpec& s : scenarios) {
    if (s.task() != task) {
      throw std::invalid_argument("config: scenario " + s.id() + " does not match task");
    }
  }
  if (!finetune.scenario.empty()) scenario(finetune.scenario);
  if (!evaluate.scenario.empty()) scenario(evaluate.scenario);
  if (!compare.scenario.empty()) scenario(compare.scenario);
  model.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config parse error in " + path.string() + ": " + e.what());
  }

  RunConfig cfg;
  cfg.task = j.at("task").get<std::string>();
  if (j.contains("seed")) {
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.seed_set = true;
  }
  for (const json& sj : j.at("scenarios")) cfg.scenarios.push_back(scenario_from_json(sj));

  if (j.contains("model")) {
    const json& m = j.at("model");
    maybe(m, "num_blocks", cfg.model.trunk.num_blocks);
    maybe(m, "model_dim", cfg.model.trunk.model_dim);
    maybe(m, "num_heads", cfg.model.trunk.num_heads);
    maybe(m, "ffn_dim", cfg.model.trunk.ffn_dim);
    maybe(m, "dropout_rate", cfg.model.trunk.dropout_rate);
    maybe(m, "window", cfg.model.trunk.window);
    maybe(m, "context_len", cfg.model.context_len);
    maybe(m, "max_timestep", cfg.model.max_timestep);
    if (m.contains("attention")) {
      cfg.model.trunk.attention =
          attention_kind_from_string(m.at("attention").get<std::string>());
    }
  }
  cfg.model.trunk.max_sequence_len =
      std::max(cfg.model.trunk.max_sequence_len, cfg.model.max_tokens());

  if (j.contains("collect")) {
    const json& c = j.at("collect");
    maybe(c, "ppo_budget_steps", cfg.collect.ppo_budget_steps);
    maybe(c, "episodes_per_scenario", cfg.collect.episodes_per_scenario);
    maybe(c, "expert_fraction", cfg.collect.expert_fraction);
    if (c.contains("ppo")) cfg.collect.ppo = ppo_from_json(c.at("ppo"), cfg.collect.ppo);
  }
  if (j.contains("pretrain")) {
    cfg.pretrain.schedule = schedule_from_json(j.at("pretrain"), cfg.pretrain.schedule);
  }
  cfg.finetune.freeze = default_finetune_freeze();
  if (j.contains("finetune")) cfg.finetune = finetune_from_json(j.at("finetune"), cfg.finetune);
  if (j.contains("evaluate")) {
    const json& e = j.at("evaluate");
    maybe(e, "scenario", cfg.evaluate.scenario);
    maybe(e, "episodes", cfg.evaluate.episodes);
    if (e.contains("target_return")) {
      const json& t = e.at("target_return");
      cfg.evaluate.target_return = t.is_string() ? t.get<std::string>() : t.dump();
    }
  }
  if (j.contains("compare")) {
    const json& c = j.at("compare");
    maybe(c, "scenario", cfg.compare.scenario);
    maybe(c, "budget_steps", cfg.compare.budget_steps);
    maybe(c, "eval_episodes", cfg.compare.eval_episodes);
    maybe(c, "fewshot_episodes", cfg.compare.fewshot_episodes);
    maybe(c, "fewshot_chunk", cfg.compare.fewshot_chunk);
    cfg.compare.finetune = cfg.finetune;
    if (c.contains("finetune")) {
      cfg.compare.finetune = finetune_from_json(c.at("finetune"), cfg.compare.finetune);
    }
    if (cfg.compare.finetune.scenario.empty()) cfg.compare.finetune.scenario = cfg.compare.scenario;
  }
  if (j.contains("inputs")) {
    const json& i = j.at("inputs");
    if (i.contains("dataset")) cfg.dataset_path = i.at("dataset").get<std::string>();
    if (i.contains("checkpoint")) cfg.checkpoint_path = i.at("checkpoint").get<std::string>();
  }
  cfg.validate();
  return cfg;
}

}  // namespace dtrm
