#include "dtrm/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace dtrm {

std::vector<double> compute_returns_to_go(const std::vector<double>& rewards) {
  if (rewards.empty()) throw std::invalid_argument("returns_to_go: empty reward sequence");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("returns_to_go: non-finite reward");
  }
  std::vector<double> out(rewards.size());
  out.back() = rewards.back();
  for (int t = static_cast<int>(rewards.size()) - 2; t >= 0; --t) {
    out[t] = rewards[t] + out[t + 1];
  }
  return out;
}

void Trajectory::validate() const {
  const std::size_t t = rewards.size();
  if (t == 0) throw std::invalid_argument("trajectory: empty");
  if (states.size() != t || actions.size() != t) {
    throw std::invalid_argument("trajectory: sequence lengths disagree");
  }
  if (!returns_to_go.empty() && returns_to_go.size() != t) {
    throw std::invalid_argument("trajectory: returns length disagrees");
  }
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("trajectory: non-finite reward");
  }
  for (const auto& s : states) {
    for (double v : s) {
      if (!std::isfinite(v)) throw std::invalid_argument("trajectory: non-finite state");
    }
  }
}

}  // namespace dtrm
