// Return-conditioned sequence policy: trajectory windows are tokenized as
// [prompt] (R,s,a)(R,s,a)... with a learned timestep embedding shared by the
// three tokens of a step; actions are predicted from each state token.
// A shared trunk is combined with per-scenario input/output adapters so
// scenarios with different state/action dimensions reuse the same model.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dtrm/env.hpp"
#include "dtrm/rng.hpp"
#include "dtrm/tensor.hpp"
#include "dtrm/trajectory.hpp"
#include "dtrm/transformer.hpp"

namespace dtrm {

struct DtConfig {
  TransformerConfig trunk;
  int context_len = 20;   // timesteps kept in the conditioning window
  int max_timestep = 128;  // timestep-embedding table size

  // 1 prompt token + 3 tokens per step
  int max_tokens() const { return 1 + 3 * context_len; }
  void validate() const;
};

// Per-scenario pieces: state/action embeddings, discrete codebooks, action
// heads, and the non-learnable normalization constants.
struct ScenarioAdapter {
  std::string scenario_id;
  int state_dim = 0;
  HybridActionSpec action_spec;
  std::vector<double> prompt_features;
  std::vector<double> state_mean, state_std;
  double rtg_scale = 1.0;

  int codebook_dim = 0;     // model_dim / num_parts, floored
  int action_feat_dim = 0;  // num_discrete * codebook_dim + num_continuous

  Tensor state_w, state_b;
  Tensor action_w, action_b;
  std::vector<Tensor> codebooks;                   // [C_p × codebook_dim]
  std::vector<Tensor> head_disc_w, head_disc_b;    // model_dim × codebook_dim
  std::vector<Tensor> head_cont_w, head_cont_b;    // (model_dim + j) × 1
};

// Groups to hold fixed during fine-tuning, matched by parameter-name prefix
// ("trunk", "trunk.b1", "embed", "adapter.<id>", or "all").
struct FreezeSpec {
  std::vector<std::string> frozen_prefixes;
  bool matches(const std::string& param_name) const;
};

// Everything predict_action needs about the running episode.
struct DtContext {
  std::string scenario_id;
  double target_return = 0.0;
  std::vector<std::vector<double>> states;  // length cur+1 (current state last)
  std::vector<HybridAction> actions;        // length cur
  std::vector<double> rewards;              // length cur
};

struct WindowRef {
  const Trajectory* traj = nullptr;
  int begin = 0;
  int end = 0;  // exclusive
  double weight = 1.0;
};

// Nearest row of a codebook by Euclidean distance, lowest index on ties.
int nearest_codebook_row(const Tensor& codebook, const std::vector<double>& v);

class DtModel {
 public:
  DtModel(DtConfig cfg, std::string task_family, int prompt_feature_dim, std::uint64_t seed);

  const DtConfig& config() const { return cfg_; }
  const std::string& task_family() const { return task_family_; }
  int prompt_feature_dim() const { return prompt_feature_dim_; }
  std::uint64_t init_seed() const { return init_seed_; }

  bool has_scenario(const std::string& id) const { return adapters_.count(id) > 0; }
  ScenarioAdapter& adapter(const std::string& id);
  const ScenarioAdapter& adapter(const std::string& id) const;
  std::vector<std::string> scenario_ids() const;

  // Fresh adapter; learnable pieces are copied from the dimensionally nearest
  // existing adapter when shapes agree, otherwise drawn small random.
  void add_scenario(const std::string& id, int state_dim, const HybridActionSpec& spec,
                    std::vector<double> prompt_features, std::vector<double> state_mean,
                    std::vector<double> state_std, double rtg_scale);

  // Mean over the window's action slots of (sum of per-part CE and MSE).
  Tensor window_loss(const WindowRef& w, bool train, Rng* dropout_rng) const;

  // Decodes the prediction for the next action slot; always returns a legal
  // action. Steps older than context_len are evicted.
  HybridAction predict_action(const DtContext& ctx) const;

  // Input-side action embedding (codebook rows + raw continuous values).
  Tensor embed_action_features(const ScenarioAdapter& a, const HybridAction& action) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void visit_parameters(const std::function<void(const std::string&, Tensor&)>& fn);
  void set_frozen(const FreezeSpec& freeze, bool frozen);
  std::size_t parameter_count() const;

  const Transformer& trunk() const { return trunk_; }
  Transformer& trunk() { return trunk_; }

  Tensor head_norm_g, head_norm_b;
  Tensor rtg_w, rtg_b;          // 1 -> d
  Tensor prompt_w, prompt_b;    // (1 + prompt_feature_dim) -> d
  Tensor time_table;            // max_timestep × d

 private:
  struct StepInput {
    double rtg_scaled = 0.0;
    const std::vector<double>* state = nullptr;
    const HybridAction* action = nullptr;  // null for the trailing query step
    int timestep = 0;
  };
  // Trunk outputs at the state-token positions, one per step.
  std::vector<Tensor> forward_steps(const ScenarioAdapter& a, double prompt_return_scaled,
                                    const std::vector<StepInput>& steps, bool train,
                                    Rng* dropout_rng) const;

  DtConfig cfg_;
  std::string task_family_;
  int prompt_feature_dim_;
  std::uint64_t init_seed_;
  Rng init_rng_;
  Transformer trunk_;
  std::map<std::string, ScenarioAdapter> adapters_;  // ordered for determinism
};

}  // namespace dtrm
