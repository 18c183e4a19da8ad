#include "dtrm/env_irs.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dtrm {

namespace {

double dist2d(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

std::complex<double> unit_phasor(double phase) {
  return {std::cos(phase), std::sin(phase)};
}

}  // namespace

void IrsScenario::validate() const {
  if (id.empty()) throw std::invalid_argument("irs scenario: empty id");
  if (num_elements < 1) throw std::invalid_argument("irs scenario: num_elements must be >= 1");
  if (phase_levels < 2) throw std::invalid_argument("irs scenario: phase_levels must be >= 2");
  if (power_levels.empty()) throw std::invalid_argument("irs scenario: no power levels");
  if (alpha_direct <= 0 || alpha_bs_irs <= 0 || alpha_irs_user <= 0) {
    throw std::invalid_argument("irs scenario: pathloss exponents must be positive");
  }
  if (noise_power <= 0) throw std::invalid_argument("irs scenario: noise power must be positive");
  if (episode_len < 1) throw std::invalid_argument("irs scenario: episode_len must be >= 1");
  if (rician_k < 0) throw std::invalid_argument("irs scenario: rician K must be >= 0");
  if (time_corr < 0 || time_corr > 1) {
    throw std::invalid_argument("irs scenario: time correlation must be in [0,1]");
  }
}

IrsEnv::IrsEnv(IrsScenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  spec_.discrete_cardinalities.push_back(static_cast<int>(scenario_.power_levels.size()));
  for (int n = 0; n < scenario_.num_elements; ++n) {
    spec_.discrete_cardinalities.push_back(scenario_.phase_levels);
  }
}

IrsChannelState IrsEnv::los_channel() const {
  const int n_el = scenario_.num_elements;
  const double two_pi = 2.0 * std::numbers::pi;
  const double d_du = dist2d(scenario_.bs_pos, scenario_.user_pos);
  const double d_bi = dist2d(scenario_.bs_pos, scenario_.irs_pos);
  const double d_iu = dist2d(scenario_.irs_pos, scenario_.user_pos);

  IrsChannelState ch;
  ch.bs_irs.resize(n_el);
  ch.irs_user.resize(n_el);

  const double amp_d = std::sqrt(scenario_.ref_gain * std::pow(d_du, -scenario_.alpha_direct));
  ch.direct = amp_d * unit_phasor(-two_pi * d_du / scenario_.wavelength);

  // Half-wavelength line array; per-element phase progression follows the
  // departure/arrival cosine of each hop.
  const double cos_bi = (scenario_.irs_pos[0] - scenario_.bs_pos[0]) / d_bi;
  const double cos_iu = (scenario_.user_pos[0] - scenario_.irs_pos[0]) / d_iu;
  const double amp_f = std::sqrt(scenario_.ref_gain * std::pow(d_bi, -scenario_.alpha_bs_irs));
  const double amp_g = std::sqrt(scenario_.ref_gain * std::pow(d_iu, -scenario_.alpha_irs_user));
  for (int n = 0; n < n_el; ++n) {
    ch.bs_irs[n] =
        amp_f * unit_phasor(-two_pi * d_bi / scenario_.wavelength - std::numbers::pi * n * cos_bi);
    ch.irs_user[n] =
        amp_g * unit_phasor(-two_pi * d_iu / scenario_.wavelength - std::numbers::pi * n * cos_iu);
  }
  return ch;
}

void IrsEnv::draw_channel() {
  const int n_el = scenario_.num_elements;
  const double k = scenario_.rician_k;
  const double nlos_frac = 1.0 / (k + 1.0);
  const double los_frac = std::sqrt(k / (k + 1.0));

  IrsChannelState los = los_channel();
  auto cnormal = [&](double var) {
    const double s = std::sqrt(var / 2.0);
    return std::complex<double>(rng_.normal(0.0, s), rng_.normal(0.0, s));
  };

  nlos_direct_ = cnormal(std::norm(los.direct) * nlos_frac);
  nlos_bs_irs_.resize(n_el);
  nlos_irs_user_.resize(n_el);
  for (int n = 0; n < n_el; ++n) {
    nlos_bs_irs_[n] = cnormal(std::norm(los.bs_irs[n]) * nlos_frac);
    nlos_irs_user_[n] = cnormal(std::norm(los.irs_user[n]) * nlos_frac);
  }

  channel_ = los;
  channel_.direct = los_frac * los.direct + nlos_direct_;
  for (int n = 0; n < n_el; ++n) {
    channel_.bs_irs[n] = los_frac * los.bs_irs[n] + nlos_bs_irs_[n];
    channel_.irs_user[n] = los_frac * los.irs_user[n] + nlos_irs_user_[n];
  }
  channel_.prev_rate = 0.0;
}

void IrsEnv::evolve_channel() {
  const int n_el = scenario_.num_elements;
  const double rho = scenario_.time_corr;
  const double innov = std::sqrt(1.0 - rho * rho);
  const double nlos_frac = 1.0 / (scenario_.rician_k + 1.0);
  const double los_frac = std::sqrt(scenario_.rician_k / (scenario_.rician_k + 1.0));

  IrsChannelState los = los_channel();
  auto cnormal = [&](double var) {
    const double s = std::sqrt(var / 2.0);
    return std::complex<double>(rng_.normal(0.0, s), rng_.normal(0.0, s));
  };

  nlos_direct_ = rho * nlos_direct_ + innov * cnormal(std::norm(los.direct) * nlos_frac);
  channel_.direct = los_frac * los.direct + nlos_direct_;
  for (int n = 0; n < n_el; ++n) {
    nlos_bs_irs_[n] =
        rho * nlos_bs_irs_[n] + innov * cnormal(std::norm(los.bs_irs[n]) * nlos_frac);
    nlos_irs_user_[n] =
        rho * nlos_irs_user_[n] + innov * cnormal(std::norm(los.irs_user[n]) * nlos_frac);
    channel_.bs_irs[n] = los_frac * los.bs_irs[n] + nlos_bs_irs_[n];
    channel_.irs_user[n] = los_frac * los.irs_user[n] + nlos_irs_user_[n];
  }
}

std::vector<double> IrsEnv::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  draw_channel();
  clock_ = 0;
  done_ = false;
  return state_features(channel_, scenario_.num_elements);
}

StepResult IrsEnv::step(const HybridAction& action) {
  if (done_) throw std::logic_error("irs env: step after episode end");
  validate_action(action, spec_);

  const double reward = compute_rate(channel_, action, scenario_);
  evolve_channel();
  channel_.prev_rate = reward;
  ++clock_;
  done_ = clock_ >= scenario_.episode_len;

  StepResult r;
  r.state = state_features(channel_, scenario_.num_elements);
  r.reward = reward;
  r.done = done_;
  return r;
}

std::complex<double> IrsEnv::composite_channel(const IrsChannelState& ch,
                                               const std::vector<int>& phase_indices,
                                               int phase_levels) {
  if (phase_indices.size() != ch.bs_irs.size()) {
    throw std::invalid_argument("composite_channel: one phase index per element");
  }
  std::complex<double> sum = ch.direct;
  const double step = 2.0 * std::numbers::pi / phase_levels;
  for (std::size_t n = 0; n < phase_indices.size(); ++n) {
    sum += ch.irs_user[n] * ch.bs_irs[n] * unit_phasor(step * phase_indices[n]);
  }
  return sum;
}

double IrsEnv::compute_rate(const IrsChannelState& ch, const HybridAction& action,
                            const IrsScenario& scenario) {
  if (action.discrete.size() != static_cast<std::size_t>(scenario.num_elements + 1)) {
    throw std::invalid_argument("compute_rate: action arity mismatch");
  }
  const double power = scenario.power_levels.at(action.discrete[0]);
  const std::vector<int> phases(action.discrete.begin() + 1, action.discrete.end());
  const std::complex<double> h = composite_channel(ch, phases, scenario.phase_levels);
  const double snr = power * std::norm(h) / scenario.noise_power;
  return std::log2(1.0 + snr);
}

std::vector<double> IrsEnv::state_features(const IrsChannelState& ch, int num_elements) {
  std::vector<double> f;
  f.reserve(2 * num_elements + 3);
  f.push_back(ch.direct.real());
  f.push_back(ch.direct.imag());
  for (int n = 0; n < num_elements; ++n) {
    const std::complex<double> c = ch.irs_user[n] * ch.bs_irs[n];
    f.push_back(c.real());
    f.push_back(c.imag());
  }
  f.push_back(ch.prev_rate);
  return f;
}

std::vector<double> IrsEnv::prompt_features() const {
  double max_power = scenario_.power_levels[0];
  for (double p : scenario_.power_levels) max_power = std::max(max_power, p);
  return {static_cast<double>(scenario_.num_elements),
          static_cast<double>(scenario_.phase_levels),
          static_cast<double>(scenario_.power_levels.size()),
          max_power,
          std::log10(scenario_.noise_power),
          scenario_.alpha_direct,
          scenario_.alpha_bs_irs,
          scenario_.alpha_irs_user,
          scenario_.rician_k,
          static_cast<double>(scenario_.episode_len)};
}

HybridAction IrsEnv::aligned_action() const {
  const double step = 2.0 * std::numbers::pi / scenario_.phase_levels;
  const double ref = std::abs(channel_.direct) > 0.0 ? std::arg(channel_.direct) : 0.0;
  HybridAction a;
  int best_p = 0;
  for (std::size_t i = 1; i < scenario_.power_levels.size(); ++i) {
    if (scenario_.power_levels[i] > scenario_.power_levels[best_p]) best_p = static_cast<int>(i);
  }
  a.discrete.push_back(best_p);
  for (int n = 0; n < scenario_.num_elements; ++n) {
    const std::complex<double> c = channel_.irs_user[n] * channel_.bs_irs[n];
    const double want = ref - std::arg(c);
    int k = static_cast<int>(std::lround(want / step));
    k %= scenario_.phase_levels;
    if (k < 0) k += scenario_.phase_levels;
    a.discrete.push_back(k);
  }
  return a;
}

HybridAction IrsEnv::best_action_exhaustive() const {
  const int n_el = scenario_.num_elements;
  const int levels = scenario_.phase_levels;
  double combos = std::pow(static_cast<double>(levels), n_el);
  if (combos > (1 << 20)) {
    throw std::invalid_argument("best_action_exhaustive: search space too large");
  }
  int best_p = 0;
  for (std::size_t i = 1; i < scenario_.power_levels.size(); ++i) {
    if (scenario_.power_levels[i] > scenario_.power_levels[best_p]) best_p = static_cast<int>(i);
  }

  std::vector<int> phases(n_el, 0);
  std::vector<int> best_phases = phases;
  double best_gain = -1.0;
  const long total = static_cast<long>(combos);
  for (long it = 0; it < total; ++it) {
    long rem = it;
    for (int n = 0; n < n_el; ++n) {
      phases[n] = static_cast<int>(rem % levels);
      rem /= levels;
    }
    const double gain = std::norm(composite_channel(channel_, phases, levels));
    if (gain > best_gain) {
      best_gain = gain;
      best_phases = phases;
    }
  }
  HybridAction a;
  a.discrete.push_back(best_p);
  for (int k : best_phases) a.discrete.push_back(k);
  return a;
}

void validate_action(const HybridAction& a, const HybridActionSpec& spec) {
  if (a.discrete.size() != spec.discrete_cardinalities.size()) {
    throw std::invalid_argument("action: discrete arity mismatch");
  }
  for (std::size_t i = 0; i < a.discrete.size(); ++i) {
    if (a.discrete[i] < 0 || a.discrete[i] >= spec.discrete_cardinalities[i]) {
      throw std::invalid_argument("action: discrete index out of range");
    }
  }
  if (a.continuous.size() != spec.continuous_bounds.size()) {
    throw std::invalid_argument("action: continuous arity mismatch");
  }
  for (std::size_t i = 0; i < a.continuous.size(); ++i) {
    if (a.continuous[i] < spec.continuous_bounds[i].first ||
        a.continuous[i] > spec.continuous_bounds[i].second) {
      throw std::invalid_argument("action: continuous value out of bounds");
    }
  }
}

}  // namespace dtrm
