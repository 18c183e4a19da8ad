// The collect -> pretrain -> finetune -> evaluate -> compare workflow.
// Every command is a pure function of (config, input files, seed): reruns
// write byte-identical CSV outputs.
#pragma once

#include <filesystem>

#include "dtrm/config.hpp"
#include "dtrm/metrics.hpp"

namespace dtrm {

// Trains one PPO policy per configured scenario and writes the pooled
// trajectory buffer plus per-scenario learning curves.
void cmd_collect(const RunConfig& cfg, const std::filesystem::path& out_dir);

// Multi-scenario pre-training over the dataset named in the config.
void cmd_pretrain(const RunConfig& cfg, const std::filesystem::path& out_dir);

// Few-shot collection in the held-out scenario followed by layer-frozen
// fine-tuning of the pre-trained checkpoint.
void cmd_finetune(const RunConfig& cfg, const std::filesystem::path& out_dir);

// N-episode rollouts of a checkpoint on one scenario.
void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct CompareSummary {
  double speedup = 0.0;          // PPO steps to level / DT-FT steps to level
  double ppo_plateau = 0.0;      // final-quarter mean of the PPO curve
  double dtft_plateau = 0.0;
  double random_plateau = 0.0;
  double plateau_ratio = 0.0;    // dtft / ppo
  long budget_steps = 0;         // identical for every arm
};

// Three arms on the new scenario under equal env-interaction budgets:
// fine-tuned model, PPO from scratch, and random actions.
CompareSummary cmd_compare(const RunConfig& cfg, const std::filesystem::path& out_dir);

// Shared curve analysis: first step at which the moving average (window 5)
// reaches the level; plateau = final-quarter mean.
double curve_plateau(const std::vector<std::pair<long, double>>& curve);
long steps_to_level(const std::vector<std::pair<long, double>>& curve, double level);

}  // namespace dtrm
