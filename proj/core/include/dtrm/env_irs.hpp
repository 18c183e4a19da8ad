// IRS-aided downlink: one BS, one IRS with N elements, one mobile user.
// Actions pick the BS power level and N discrete phase shifts; the reward is
// the achieved rate log2(1 + P|h_d + sum_n g_n e^{j theta_n} f_n|^2 / sigma^2).
#pragma once

#include <complex>
#include <vector>

#include "dtrm/env.hpp"
#include "dtrm/rng.hpp"
#include "dtrm/scenario.hpp"

namespace dtrm {

struct IrsChannelState {
  std::complex<double> direct;                 // h_d
  std::vector<std::complex<double>> bs_irs;    // f, length N
  std::vector<std::complex<double>> irs_user;  // g, length N
  double prev_rate = 0.0;                      // bits/s/Hz
};

class IrsEnv : public Env {
 public:
  explicit IrsEnv(IrsScenario scenario);

  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(const HybridAction& action) override;

  const HybridActionSpec& action_spec() const override { return spec_; }
  int state_dim() const override { return 2 * scenario_.num_elements + 3; }
  int max_episode_len() const override { return scenario_.episode_len; }
  const std::string& scenario_id() const override { return scenario_.id; }
  std::string task_family() const override { return "irs"; }
  std::vector<double> prompt_features() const override;

  const IrsScenario& scenario() const { return scenario_; }
  const IrsChannelState& channel() const { return channel_; }

  // Rician links around the deterministic LoS steering components; in the
  // K -> inf limit the channel equals los_channel() exactly.
  IrsChannelState los_channel() const;

  // Cascade h_d + sum_n g_n f_n e^{j theta_n} for the given phase indices.
  static std::complex<double> composite_channel(const IrsChannelState& ch,
                                                const std::vector<int>& phase_indices,
                                                int phase_levels);
  static double compute_rate(const IrsChannelState& ch, const HybridAction& action,
                             const IrsScenario& scenario);
  // Feature layout: [Re h_d, Im h_d, {Re g_n f_n, Im g_n f_n}_n, prev_rate].
  static std::vector<double> state_features(const IrsChannelState& ch, int num_elements);

  // Quantized per-element alignment toward the direct-path phase; max power.
  HybridAction aligned_action() const;
  // Exact search over all phase_levels^N configurations (tiny N only).
  HybridAction best_action_exhaustive() const;

 private:
  void draw_channel();
  void evolve_channel();

  IrsScenario scenario_;
  HybridActionSpec spec_;
  Rng rng_{0};
  IrsChannelState channel_;
  // NLoS residuals evolve with Gauss-Markov memory; LoS parts are static.
  std::complex<double> nlos_direct_;
  std::vector<std::complex<double>> nlos_bs_irs_;
  std::vector<std::complex<double>> nlos_irs_user_;
  int clock_ = 0;
  bool done_ = true;
};

}  // namespace dtrm
