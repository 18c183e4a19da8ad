// Scenario parameter blocks for the two simulated tasks.
#pragma once

#include <array>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace dtrm {

class Env;

struct IrsScenario {
  std::string id;
  int num_elements = 16;
  int phase_levels = 4;
  std::vector<double> power_levels = {0.1, 0.5, 1.0};  // W
  double alpha_direct = 3.5;
  double alpha_bs_irs = 2.2;
  double alpha_irs_user = 2.2;
  double rician_k = 5.0;
  double noise_power = 1e-9;  // W
  int episode_len = 100;
  std::array<double, 2> bs_pos = {0.0, 0.0};
  std::array<double, 2> irs_pos = {45.0, 5.0};
  std::array<double, 2> user_pos = {45.0, 0.0};
  double ref_gain = 1e-3;       // pathloss at 1 m
  double time_corr = 0.95;      // Gauss-Markov channel memory per slot
  double wavelength = 0.1;      // m

  void validate() const;
};

struct UavScenario {
  std::string id;
  int num_uavs = 2;
  int num_users = 10;
  double region = 100.0;  // square side, m
  double uav_altitude = 20.0;
  double uav_speed = 5.0;  // m per slot
  double workload_lo = 10.0;  // Mb
  double workload_hi = 20.0;
  int episode_len = 50;
  double alpha = 2.0;
  double snr_ref = 6000.0;       // linear SNR at 1 m
  double bandwidth_mhz = 1.0;
  double slot_seconds = 1.0;
  double mobility_eta = 0.8;        // Gauss-Markov memory
  double mobility_mean_speed = 1.0;  // m per slot
  double mobility_std = 0.5;

  void validate() const;
};

struct ScenarioSpec {
  std::variant<IrsScenario, UavScenario> params;

  const std::string& id() const;
  std::string task() const;  // "irs" | "uav"
  const IrsScenario& irs() const;
  const UavScenario& uav() const;
};

std::unique_ptr<Env> make_env(const ScenarioSpec& spec);

}  // namespace dtrm
