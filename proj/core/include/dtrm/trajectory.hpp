// Episode records and return-to-go bookkeeping.
#pragma once

#include <string>
#include <vector>

#include "dtrm/env.hpp"

namespace dtrm {

// Suffix sums: out[t] = sum of rewards[t..T-1], computed right-to-left so the
// recurrence out[t] == rewards[t] + out[t+1] holds exactly.
std::vector<double> compute_returns_to_go(const std::vector<double>& rewards);

struct Trajectory {
  std::string scenario_id;
  bool expert = false;
  std::vector<std::vector<double>> states;  // T rows
  std::vector<HybridAction> actions;        // T
  std::vector<double> rewards;              // T
  std::vector<double> returns_to_go;        // derived, never persisted

  int length() const { return static_cast<int>(rewards.size()); }
  double total_return() const { return returns_to_go.empty() ? 0.0 : returns_to_go.front(); }

  void recompute_returns() { returns_to_go = compute_returns_to_go(rewards); }
  void validate() const;  // sequence lengths agree, values finite
};

}  // namespace dtrm
