#include "dtrm/env_uav.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dtrm {

void UavScenario::validate() const {
  if (id.empty()) throw std::invalid_argument("uav scenario: empty id");
  if (num_uavs < 1) throw std::invalid_argument("uav scenario: num_uavs must be >= 1");
  if (num_users < 1) throw std::invalid_argument("uav scenario: num_users must be >= 1");
  if (region <= 0) throw std::invalid_argument("uav scenario: region must be positive");
  if (workload_lo > workload_hi || workload_lo < 0) {
    throw std::invalid_argument("uav scenario: bad workload range");
  }
  if (episode_len < 1) throw std::invalid_argument("uav scenario: episode_len must be >= 1");
  if (uav_altitude <= 0) throw std::invalid_argument("uav scenario: altitude must be positive");
  if (mobility_eta < 0 || mobility_eta > 1) {
    throw std::invalid_argument("uav scenario: mobility eta must be in [0,1]");
  }
}

void mobility_step(UserMobility& user, double eta, double noise_std, double region, Rng& rng) {
  const double innov = std::sqrt(std::max(0.0, 1.0 - eta * eta));
  for (int c = 0; c < 2; ++c) {
    user.vel[c] = eta * user.vel[c] + (1.0 - eta) * user.mean_vel[c] +
                  innov * rng.normal(0.0, noise_std);
    user.pos[c] += user.vel[c];
    // reflect at the boundary, flipping the drift as well
    while (user.pos[c] < 0.0 || user.pos[c] > region) {
      if (user.pos[c] < 0.0) user.pos[c] = -user.pos[c];
      if (user.pos[c] > region) user.pos[c] = 2.0 * region - user.pos[c];
      user.vel[c] = -user.vel[c];
      user.mean_vel[c] = -user.mean_vel[c];
    }
  }
}

UavEnv::UavEnv(UavScenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  for (int k = 0; k < scenario_.num_uavs; ++k) {
    spec_.discrete_cardinalities.push_back(5);  // N, S, E, W, hover
    spec_.discrete_cardinalities.push_back(scenario_.num_users);
  }
}

double UavEnv::rate_mb(double distance_3d, const UavScenario& scenario) {
  if (distance_3d <= 0) throw std::invalid_argument("uav rate: distance must be positive");
  const double snr = scenario.snr_ref / std::pow(distance_3d, scenario.alpha);
  return scenario.bandwidth_mhz * std::log2(1.0 + snr) * scenario.slot_seconds;
}

std::vector<double> UavEnv::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  state_.uav_pos.clear();
  // deterministic spawn grid
  const double q = scenario_.region / 4.0;
  const std::array<std::array<double, 2>, 4> grid = {
      {{q, q}, {3 * q, 3 * q}, {q, 3 * q}, {3 * q, q}}};
  for (int k = 0; k < scenario_.num_uavs; ++k) {
    state_.uav_pos.push_back(grid[k % 4]);
  }

  state_.users.assign(scenario_.num_users, UserMobility{});
  state_.remaining_units.assign(scenario_.num_users, 0);
  for (int u = 0; u < scenario_.num_users; ++u) {
    UserMobility& m = state_.users[u];
    m.pos = {rng_.uniform(0.0, scenario_.region), rng_.uniform(0.0, scenario_.region)};
    const double heading = rng_.uniform(0.0, 2.0 * std::numbers::pi);
    m.mean_vel = {scenario_.mobility_mean_speed * std::cos(heading),
                  scenario_.mobility_mean_speed * std::sin(heading)};
    m.vel = m.mean_vel;
    const double mb = rng_.uniform(scenario_.workload_lo, scenario_.workload_hi);
    state_.remaining_units[u] = static_cast<std::int64_t>(std::llround(mb / kWorkUnitMb));
  }
  clock_ = 0;
  done_ = false;
  return state_features();
}

StepResult UavEnv::step(const HybridAction& action) {
  if (done_) throw std::logic_error("uav env: step after episode end");
  validate_action(action, spec_);

  // move UAVs, clipped to the region
  for (int k = 0; k < scenario_.num_uavs; ++k) {
    auto& pos = state_.uav_pos[k];
    switch (action.discrete[2 * k]) {
      case 0: pos[1] += scenario_.uav_speed; break;  // N
      case 1: pos[1] -= scenario_.uav_speed; break;  // S
      case 2: pos[0] += scenario_.uav_speed; break;  // E
      case 3: pos[0] -= scenario_.uav_speed; break;  // W
      default: break;                                // hover
    }
    pos[0] = std::clamp(pos[0], 0.0, scenario_.region);
    pos[1] = std::clamp(pos[1], 0.0, scenario_.region);
  }

  // serve selected users; conflicts resolved sequentially in UAV-index order
  std::int64_t served_units = 0;
  for (int k = 0; k < scenario_.num_uavs; ++k) {
    const int u = action.discrete[2 * k + 1];
    const double dx = state_.uav_pos[k][0] - state_.users[u].pos[0];
    const double dy = state_.uav_pos[k][1] - state_.users[u].pos[1];
    const double d = std::sqrt(dx * dx + dy * dy + scenario_.uav_altitude * scenario_.uav_altitude);
    const auto rate_units =
        static_cast<std::int64_t>(std::floor(rate_mb(d, scenario_) / kWorkUnitMb));
    const std::int64_t served = std::min(state_.remaining_units[u], rate_units);
    state_.remaining_units[u] -= served;
    served_units += served;
  }

  for (UserMobility& m : state_.users) {
    mobility_step(m, scenario_.mobility_eta, scenario_.mobility_std, scenario_.region, rng_);
  }

  ++clock_;
  bool all_drained = true;
  for (std::int64_t r : state_.remaining_units) {
    if (r > 0) {
      all_drained = false;
      break;
    }
  }
  done_ = clock_ >= scenario_.episode_len || all_drained;

  StepResult r;
  r.state = state_features();
  r.reward = static_cast<double>(served_units) * kWorkUnitMb;
  r.done = done_;
  return r;
}

std::vector<double> UavEnv::state_features() const {
  std::vector<double> f;
  f.reserve(state_dim());
  for (const auto& p : state_.uav_pos) {
    f.push_back(p[0]);
    f.push_back(p[1]);
  }
  for (const UserMobility& m : state_.users) {
    f.push_back(m.pos[0]);
    f.push_back(m.pos[1]);
  }
  for (std::int64_t r : state_.remaining_units) {
    f.push_back(static_cast<double>(r) * kWorkUnitMb);
  }
  return f;
}

std::vector<double> UavEnv::prompt_features() const {
  return {static_cast<double>(scenario_.num_uavs),
          static_cast<double>(scenario_.num_users),
          scenario_.region,
          scenario_.uav_altitude,
          scenario_.uav_speed,
          scenario_.workload_lo,
          scenario_.workload_hi,
          scenario_.alpha,
          std::log10(scenario_.snr_ref),
          static_cast<double>(scenario_.episode_len)};
}

}  // namespace dtrm
