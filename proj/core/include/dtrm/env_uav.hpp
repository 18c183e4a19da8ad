// UAV-aided MEC: K UAVs move over a bounded region and drain mobile users'
// computation workloads; the reward is the Mb served per slot.
//
// Workloads are tracked internally in units of 2^-10 Mb so that the
// conservation identity (initial == remaining + all rewards) holds exactly
// in double arithmetic.
#pragma once

#include <cstdint>
#include <vector>

#include "dtrm/env.hpp"
#include "dtrm/rng.hpp"
#include "dtrm/scenario.hpp"

namespace dtrm {

struct UserMobility {
  std::array<double, 2> pos;
  std::array<double, 2> vel;
  std::array<double, 2> mean_vel;
};

// One Gauss-Markov slot: v' = eta*v + (1-eta)*mean + sqrt(1-eta^2)*w,
// position advanced and reflected at the region boundary.
void mobility_step(UserMobility& user, double eta, double noise_std, double region, Rng& rng);

struct UavState {
  std::vector<std::array<double, 2>> uav_pos;
  std::vector<UserMobility> users;
  std::vector<std::int64_t> remaining_units;  // 2^-10 Mb each
};

class UavEnv : public Env {
 public:
  explicit UavEnv(UavScenario scenario);

  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(const HybridAction& action) override;

  const HybridActionSpec& action_spec() const override { return spec_; }
  int state_dim() const override { return 2 * scenario_.num_uavs + 3 * scenario_.num_users; }
  int max_episode_len() const override { return scenario_.episode_len; }
  const std::string& scenario_id() const override { return scenario_.id; }
  std::string task_family() const override { return "uav"; }
  std::vector<double> prompt_features() const override;

  const UavScenario& scenario() const { return scenario_; }
  const UavState& state() const { return state_; }

  // Mb per slot across a 3-D link of this length.
  static double rate_mb(double distance_3d, const UavScenario& scenario);

  static constexpr double kWorkUnitMb = 1.0 / 1024.0;

 private:
  std::vector<double> state_features() const;

  UavScenario scenario_;
  HybridActionSpec spec_;
  Rng rng_{0};
  UavState state_;
  int clock_ = 0;
  bool done_ = true;
};

}  // namespace dtrm
