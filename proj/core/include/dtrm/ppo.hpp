// Proximal Policy Optimization with a factorized categorical actor over the
// discrete action parts. Generates expert and non-expert trajectories for
// the sequence-model datasets and serves as the convergence baseline.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dtrm/env.hpp"
#include "dtrm/optim.hpp"
#include "dtrm/rng.hpp"
#include "dtrm/tensor.hpp"
#include "dtrm/trajectory.hpp"

namespace dtrm {

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 4;
  int rollout_batch = 2048;
  int minibatch = 256;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double lr = 3e-4;
  int hidden_dim = 64;
  // expert_flag threshold = this percentile of the final training episodes
  double expert_percentile = 0.8;
  int expert_window_episodes = 200;

  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// values carries one bootstrap entry beyond the rewards: values.size() ==
// rewards.size() + 1. A_t = delta_t + gamma*lambda*A_{t+1},
// delta_t = r_t + gamma*V_{t+1} - V_t; returns are A + V.
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              double gamma, double lambda);

struct PpoDiagnostics {
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct PpoBatch {
  std::vector<std::vector<double>> states;  // already normalized
  std::vector<HybridAction> actions;
  std::vector<double> logp_old;
  std::vector<double> advantages;  // normalized per batch
  std::vector<double> returns;     // value targets (reward-scaled)
};

// Streaming mean/variance (Welford); used for observation whitening and
// reward scaling.
class RunningMeanStd {
 public:
  explicit RunningMeanStd(int dim);
  void update(const std::vector<double>& x);
  void update(double x);
  std::vector<double> normalize(const std::vector<double>& x) const;
  double std_of(int i) const;
  double mean_of(int i) const { return mean_[i]; }
  long count() const { return count_; }

 private:
  std::vector<double> mean_, m2_;
  long count_ = 0;
};

class PpoPolicy {
 public:
  PpoPolicy(int state_dim, HybridActionSpec action_spec, PpoConfig cfg, std::uint64_t init_seed);

  // logits per discrete part for a batch of normalized states
  std::vector<Tensor> actor_logits(const Tensor& states) const;
  Tensor critic_values(const Tensor& states) const;  // [m]

  HybridAction act_sampled(const std::vector<double>& norm_state, Rng& rng,
                           double* logp = nullptr) const;
  HybridAction act_greedy(const std::vector<double>& norm_state) const;
  double state_value(const std::vector<double>& norm_state) const;

  PpoDiagnostics update(const PpoBatch& batch, Rng& rng);

  const PpoConfig& config() const { return cfg_; }
  const HybridActionSpec& action_spec() const { return spec_; }
  RunningMeanStd& obs_norm() { return obs_norm_; }
  const RunningMeanStd& obs_norm() const { return obs_norm_; }

  std::vector<double> normalize_obs(const std::vector<double>& raw) const {
    return obs_norm_.normalize(raw);
  }

 private:
  Tensor mlp_forward(const Tensor& x, const std::vector<Tensor>& w,
                     const std::vector<Tensor>& b) const;
  std::vector<Tensor> trainable_params() const;

  int state_dim_;
  HybridActionSpec spec_;
  PpoConfig cfg_;
  // actor trunk + per-part output layer (single matrix, split by part)
  std::vector<Tensor> actor_w_, actor_b_;
  std::vector<Tensor> critic_w_, critic_b_;
  RunningMeanStd obs_norm_;
  AdamW optimizer_;
};

struct CurvePoint {
  long env_steps = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
};

struct PpoTrainResult {
  std::vector<CurvePoint> curve;
  double expert_threshold = 0.0;  // percentile of recent training returns
  long env_steps_used = 0;
};

// Trains in-place on a persistent environment stream; one curve point per
// rollout batch, so curve.size() == budget_steps / rollout_batch.
PpoTrainResult ppo_train(PpoPolicy& policy, Env& env, long budget_steps, std::uint64_t seed);

enum class CollectMode { kGreedy, kSampled };

// Rolls out full episodes; expert_flag is set by comparing the realized
// return against expert_threshold.
std::vector<Trajectory> collect_dataset(PpoPolicy& policy, Env& env, int episodes,
                                        double expert_threshold, CollectMode mode,
                                        std::uint64_t seed);

}  // namespace dtrm
