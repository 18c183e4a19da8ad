// Episodic simulator interface shared by both tasks.
#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dtrm {

// Mixed discrete/continuous action: category indices with per-part
// cardinality plus bounded scalars.
struct HybridActionSpec {
  std::vector<int> discrete_cardinalities;
  std::vector<std::pair<double, double>> continuous_bounds;

  int num_discrete() const { return static_cast<int>(discrete_cardinalities.size()); }
  int num_continuous() const { return static_cast<int>(continuous_bounds.size()); }
  bool operator==(const HybridActionSpec&) const = default;
};

struct HybridAction {
  std::vector<int> discrete;
  std::vector<double> continuous;

  bool operator==(const HybridAction&) const = default;
};

void validate_action(const HybridAction& a, const HybridActionSpec& spec);

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  virtual StepResult step(const HybridAction& action) = 0;

  virtual const HybridActionSpec& action_spec() const = 0;
  virtual int state_dim() const = 0;
  virtual int max_episode_len() const = 0;
  virtual const std::string& scenario_id() const = 0;
  virtual std::string task_family() const = 0;
  // Static scenario descriptor (constraints + configuration); the desired
  // return is prepended by the policy side, not here.
  virtual std::vector<double> prompt_features() const = 0;
};

}  // namespace dtrm
