// Supervised training loops for the sequence policy: multi-scenario
// pre-training, layer-frozen few-shot fine-tuning, lightweight distillation
// with a parameter-similarity penalty, and closed-loop evaluation.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dtrm/dt_model.hpp"
#include "dtrm/env.hpp"
#include "dtrm/scenario.hpp"
#include "dtrm/trajectory.hpp"

namespace dtrm {

struct DtTrainSchedule {
  int steps = 500;
  int batch_size = 64;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double nonexpert_weight = 0.5;
  std::uint64_t seed = 0;
};

struct DtTrainResult {
  std::vector<double> loss_curve;  // one entry per optimizer step
};

// Derives the state normalizer and the return scale for one scenario's slice
// of the dataset and registers a fresh adapter.
void register_scenario_from_data(DtModel& model, const ScenarioSpec& spec,
                                 const std::vector<Trajectory>& trajectories);

// Uniform scenario mixing per batch; windows are the last <= context_len
// steps before a uniformly drawn cut. Scenarios present in the dataset but
// missing from the model must be registered beforehand.
DtTrainResult dt_pretrain(DtModel& model, const std::vector<Trajectory>& dataset,
                          const DtTrainSchedule& schedule);

struct FinetuneOptions {
  DtTrainSchedule schedule;
  FreezeSpec freeze;  // default: whole trunk and shared embeddings
};

FreezeSpec default_finetune_freeze();

// Registers the new scenario from the few-shot set, freezes the requested
// groups for the duration of training, and restores trainability after.
DtTrainResult dt_finetune(DtModel& model, const ScenarioSpec& new_scenario,
                          const std::vector<Trajectory>& fewshot, const FinetuneOptions& opts);

// Mean squared difference over mapped parameter pairs. Shapes that agree map
// directly; a shared-head student maps its single Q/K/V projection (and K/V
// bias) to the mean over the teacher's per-head blocks.
Tensor similarity_loss(DtModel& student, const DtModel& teacher);

// Same loop as dt_pretrain but with loss + beta * similarity_loss(student,
// teacher); used to train a lightweight variant against a dense teacher.
DtTrainResult dt_distill(DtModel& student, const DtModel& teacher,
                         const std::vector<Trajectory>& dataset, const DtTrainSchedule& schedule,
                         double beta);

struct DtRolloutResult {
  double achieved_return = 0.0;
  Trajectory trajectory;
};

DtRolloutResult dt_rollout(const DtModel& model, Env& env, double target_return,
                           std::uint64_t seed);

struct EvalSummary {
  double mean_return = 0.0;
  double std_return = 0.0;
  std::vector<double> episode_returns;
};

EvalSummary dt_evaluate(const DtModel& model, Env& env, double target_return, int episodes,
                        std::uint64_t seed);

}  // namespace dtrm
