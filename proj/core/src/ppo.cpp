#include "dtrm/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dtrm/ops.hpp"

namespace dtrm {

void PpoConfig::validate() const {
  if (clip_eps <= 0.0 || clip_eps >= 1.0) throw std::invalid_argument("ppo: clip_eps in (0,1)");
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("ppo: gamma in [0,1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw std::invalid_argument("ppo: lambda in [0,1]");
  if (epochs < 1 || rollout_batch < 1 || minibatch < 1 || hidden_dim < 1) {
    throw std::invalid_argument("ppo: sizes must be positive");
  }
}

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              double gamma, double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw std::invalid_argument("gae: values must carry one bootstrap entry");
  }
  const int t_len = static_cast<int>(rewards.size());
  GaeResult out;
  out.advantages.assign(t_len, 0.0);
  out.returns.assign(t_len, 0.0);
  double acc = 0.0;
  for (int t = t_len - 1; t >= 0; --t) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lambda * acc;
    out.advantages[t] = acc;
    out.returns[t] = acc + values[t];
  }
  return out;
}

RunningMeanStd::RunningMeanStd(int dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

void RunningMeanStd::update(const std::vector<double>& x) {
  if (x.size() != mean_.size()) throw std::invalid_argument("running stats: dim mismatch");
  ++count_;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - mean_[i];
    mean_[i] += delta / static_cast<double>(count_);
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

void RunningMeanStd::update(double x) { update(std::vector<double>{x}); }

double RunningMeanStd::std_of(int i) const {
  if (count_ < 2) return 1.0;
  return std::sqrt(std::max(m2_[i] / static_cast<double>(count_ - 1), 1e-12));
}

std::vector<double> RunningMeanStd::normalize(const std::vector<double>& x) const {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean_[i]) / std_of(static_cast<int>(i));
  }
  return out;
}

namespace {

Tensor init_layer_w(Rng& rng, int in, int out, double gain) {
  Tensor t = Tensor::zeros({in, out}, true);
  const double bound = gain * std::sqrt(6.0 / (in + out));
  for (double& v : *t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

PpoPolicy::PpoPolicy(int state_dim, HybridActionSpec action_spec, PpoConfig cfg,
                     std::uint64_t init_seed)
    : state_dim_(state_dim),
      spec_(std::move(action_spec)),
      cfg_(cfg),
      obs_norm_(state_dim),
      optimizer_({}, AdamWConfig{}) {
  cfg_.validate();
  if (spec_.num_continuous() != 0) {
    throw std::invalid_argument(
        "ppo: continuous parts must be discretized by the environment design");
  }
  Rng rng(init_seed);
  const int h = cfg_.hidden_dim;
  int logits_dim = 0;
  for (int c : spec_.discrete_cardinalities) logits_dim += c;

  actor_w_ = {init_layer_w(rng, state_dim_, h, 1.0), init_layer_w(rng, h, h, 1.0),
              init_layer_w(rng, h, logits_dim, 0.01)};
  actor_b_ = {Tensor::zeros({h}, true), Tensor::zeros({h}, true),
              Tensor::zeros({logits_dim}, true)};
  critic_w_ = {init_layer_w(rng, state_dim_, h, 1.0), init_layer_w(rng, h, h, 1.0),
               init_layer_w(rng, h, 1, 1.0)};
  critic_b_ = {Tensor::zeros({h}, true), Tensor::zeros({h}, true), Tensor::zeros({1}, true)};

  AdamWConfig ocfg;
  ocfg.lr = cfg_.lr;
  ocfg.weight_decay = 0.0;
  optimizer_ = AdamW(trainable_params(), ocfg);
}

std::vector<Tensor> PpoPolicy::trainable_params() const {
  std::vector<Tensor> p;
  for (const Tensor& t : actor_w_) p.push_back(t);
  for (const Tensor& t : actor_b_) p.push_back(t);
  for (const Tensor& t : critic_w_) p.push_back(t);
  for (const Tensor& t : critic_b_) p.push_back(t);
  return p;
}

Tensor PpoPolicy::mlp_forward(const Tensor& x, const std::vector<Tensor>& w,
                              const std::vector<Tensor>& b) const {
  Tensor h = tanh_elem(linear(x, w[0], b[0]));
  h = tanh_elem(linear(h, w[1], b[1]));
  return linear(h, w[2], b[2]);
}

std::vector<Tensor> PpoPolicy::actor_logits(const Tensor& states) const {
  Tensor all = mlp_forward(states, actor_w_, actor_b_);
  const int m = all.shape.size() == 1 ? 1 : all.shape[0];
  std::vector<Tensor> parts;
  parts.reserve(spec_.num_discrete());
  int off = 0;
  const int total = all.shape.back();
  for (int c : spec_.discrete_cardinalities) {
    // slice columns [off, off+c)
    Tensor part = Tensor::zeros({m, c}, grad_enabled() && all.requires_grad);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < c; ++j) {
        (*part.data)[static_cast<std::size_t>(i) * c + j] =
            (*all.data)[static_cast<std::size_t>(i) * total + off + j];
      }
    }
    if (part.requires_grad) {
      part.node = std::make_shared<Node>();
      part.node->parents = {all};
      const int off_c = off;
      part.node->backward = [off_c, c, total, m](const Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < c; ++j) {
            (*pa.grad)[static_cast<std::size_t>(i) * total + off_c + j] +=
                (*o.grad)[static_cast<std::size_t>(i) * c + j];
          }
        }
      };
    }
    parts.push_back(part);
    off += c;
  }
  return parts;
}

Tensor PpoPolicy::critic_values(const Tensor& states) const {
  return flatten(mlp_forward(states, critic_w_, critic_b_));
}

HybridAction PpoPolicy::act_sampled(const std::vector<double>& norm_state, Rng& rng,
                                    double* logp) const {
  NoGradGuard ng;
  Tensor s = Tensor::from_values({state_dim_}, norm_state);
  std::vector<Tensor> parts = actor_logits(s);
  HybridAction a;
  double lp = 0.0;
  for (const Tensor& logits : parts) {
    Tensor p = softmax_lastdim(logits);
    const int c = p.shape.back();
    double u = rng.uniform();
    int pick_idx = c - 1;
    double acc = 0.0;
    for (int j = 0; j < c; ++j) {
      acc += (*p.data)[j];
      if (u < acc) {
        pick_idx = j;
        break;
      }
    }
    a.discrete.push_back(pick_idx);
    lp += std::log(std::max((*p.data)[pick_idx], 1e-300));
  }
  if (logp) *logp = lp;
  return a;
}

HybridAction PpoPolicy::act_greedy(const std::vector<double>& norm_state) const {
  NoGradGuard ng;
  Tensor s = Tensor::from_values({state_dim_}, norm_state);
  std::vector<Tensor> parts = actor_logits(s);
  HybridAction a;
  for (const Tensor& logits : parts) {
    const int c = logits.shape.back();
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if ((*logits.data)[j] > (*logits.data)[best]) best = j;
    }
    a.discrete.push_back(best);
  }
  return a;
}

double PpoPolicy::state_value(const std::vector<double>& norm_state) const {
  NoGradGuard ng;
  Tensor s = Tensor::from_values({1, state_dim_}, norm_state);
  return critic_values(s).value();
}

PpoDiagnostics PpoPolicy::update(const PpoBatch& batch, Rng& rng) {
  const int n = static_cast<int>(batch.states.size());
  if (n == 0) throw std::invalid_argument("ppo update: empty batch");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  PpoDiagnostics diag;
  int diag_count = 0;

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    // Fisher-Yates with our own rng keeps runs reproducible
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
    for (int start = 0; start < n; start += cfg_.minibatch) {
      const int m = std::min(cfg_.minibatch, n - start);
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(m) * state_dim_);
      std::vector<double> adv(m), ret(m), lpo(m);
      std::vector<std::vector<int>> targets(spec_.num_discrete(), std::vector<int>(m));
      for (int i = 0; i < m; ++i) {
        const int src = order[start + i];
        flat.insert(flat.end(), batch.states[src].begin(), batch.states[src].end());
        adv[i] = batch.advantages[src];
        ret[i] = batch.returns[src];
        lpo[i] = batch.logp_old[src];
        for (int p = 0; p < spec_.num_discrete(); ++p) {
          targets[p][i] = batch.actions[src].discrete[p];
        }
      }
      Tensor states = Tensor::from_values({m, state_dim_}, std::move(flat));
      Tensor adv_t = Tensor::from_values({m}, adv);
      Tensor ret_t = Tensor::from_values({m}, ret);
      Tensor lpo_t = Tensor::from_values({m}, lpo);

      std::vector<Tensor> parts = actor_logits(states);
      Tensor logp = Tensor::zeros({m});
      Tensor entropy_sum = Tensor::zeros({m});
      bool first = true;
      for (int p = 0; p < spec_.num_discrete(); ++p) {
        Tensor chosen = pick(log_softmax_lastdim(parts[p]), targets[p]);
        Tensor ent = softmax_entropy_rows(parts[p]);
        logp = first ? chosen : add(logp, chosen);
        entropy_sum = first ? ent : add(entropy_sum, ent);
        first = false;
      }
      Tensor ratio = exp_elem(sub(logp, lpo_t));
      Tensor surr1 = mul(ratio, adv_t);
      Tensor surr2 = mul(clamp(ratio, 1.0 - cfg_.clip_eps, 1.0 + cfg_.clip_eps), adv_t);
      Tensor actor_loss = scale(mean_all(min_elem(surr1, surr2)), -1.0);

      Tensor values = critic_values(states);
      Tensor value_loss = mse_loss(values, ret_t);
      Tensor entropy = mean_all(entropy_sum);

      Tensor loss = add(actor_loss, scale(value_loss, cfg_.value_coef));
      loss = sub(loss, scale(entropy, cfg_.entropy_coef));

      optimizer_.zero_grad();
      backward(loss);
      optimizer_.step();

      // diagnostics from this minibatch
      double clipped = 0.0, kl = 0.0;
      for (int i = 0; i < m; ++i) {
        const double r = (*ratio.data)[i];
        if (r < 1.0 - cfg_.clip_eps || r > 1.0 + cfg_.clip_eps) clipped += 1.0;
        kl += (*lpo_t.data)[i] - (*logp.data)[i];
      }
      diag.clip_fraction += clipped / m;
      diag.approx_kl += kl / m;
      diag.actor_loss += actor_loss.value();
      diag.value_loss += value_loss.value();
      diag.entropy += entropy.value();
      ++diag_count;
    }
  }
  if (diag_count > 0) {
    diag.clip_fraction /= diag_count;
    diag.approx_kl /= diag_count;
    diag.actor_loss /= diag_count;
    diag.value_loss /= diag_count;
    diag.entropy /= diag_count;
  }
  return diag;
}

PpoTrainResult ppo_train(PpoPolicy& policy, Env& env, long budget_steps, std::uint64_t seed) {
  const PpoConfig& cfg = policy.config();
  PpoTrainResult result;
  Rng rng(seed);
  Rng update_rng = rng.derive(1);
  RunningMeanStd reward_scale(1);
  double disc_return_acc = 0.0;

  std::vector<double> recent_returns;  // training episode returns, raw

  std::uint64_t episode_seed = rng.next_u64();
  std::vector<double> raw_state = env.reset(episode_seed);
  policy.obs_norm().update(raw_state);
  std::vector<double> norm_state = policy.normalize_obs(raw_state);
  double episode_return = 0.0;

  const long num_batches = budget_steps / cfg.rollout_batch;
  for (long b = 0; b < num_batches; ++b) {
    PpoBatch batch;
    std::vector<double> rewards_scaled;
    std::vector<double> values;
    std::vector<int> episode_cut;  // indices where an episode ended (inclusive)
    std::vector<double> batch_episode_returns;

    for (int t = 0; t < cfg.rollout_batch; ++t) {
      double logp = 0.0;
      HybridAction a = policy.act_sampled(norm_state, rng, &logp);
      values.push_back(policy.state_value(norm_state));
      StepResult sr = env.step(a);

      batch.states.push_back(norm_state);
      batch.actions.push_back(a);
      batch.logp_old.push_back(logp);

      disc_return_acc = cfg.gamma * disc_return_acc + sr.reward;
      reward_scale.update(disc_return_acc);
      const double rscale = reward_scale.count() > 1 ? reward_scale.std_of(0) : 1.0;
      rewards_scaled.push_back(sr.reward / rscale);
      episode_return += sr.reward;

      if (sr.done) {
        episode_cut.push_back(t);
        batch_episode_returns.push_back(episode_return);
        recent_returns.push_back(episode_return);
        episode_return = 0.0;
        disc_return_acc = 0.0;
        episode_seed = rng.next_u64();
        raw_state = env.reset(episode_seed);
      } else {
        raw_state = sr.state;
      }
      policy.obs_norm().update(raw_state);
      norm_state = policy.normalize_obs(raw_state);
    }
    result.env_steps_used += cfg.rollout_batch;

    // GAE per episode segment; bootstrap with V(s) when an episode was cut
    batch.advantages.assign(batch.states.size(), 0.0);
    batch.returns.assign(batch.states.size(), 0.0);
    int seg_begin = 0;
    std::size_t cut_idx = 0;
    while (seg_begin < cfg.rollout_batch) {
      int seg_end;  // inclusive
      bool terminal;
      if (cut_idx < episode_cut.size()) {
        seg_end = episode_cut[cut_idx];
        terminal = true;
        ++cut_idx;
      } else {
        seg_end = cfg.rollout_batch - 1;
        terminal = false;
      }
      std::vector<double> seg_rewards(rewards_scaled.begin() + seg_begin,
                                      rewards_scaled.begin() + seg_end + 1);
      std::vector<double> seg_values(values.begin() + seg_begin, values.begin() + seg_end + 1);
      seg_values.push_back(terminal ? 0.0 : policy.state_value(norm_state));
      GaeResult g = gae(seg_rewards, seg_values, cfg.gamma, cfg.gae_lambda);
      for (std::size_t i = 0; i < g.advantages.size(); ++i) {
        batch.advantages[seg_begin + i] = g.advantages[i];
        batch.returns[seg_begin + i] = g.returns[i];
      }
      seg_begin = seg_end + 1;
    }

    // advantage normalization
    double mean = 0.0;
    for (double a : batch.advantages) mean += a;
    mean /= static_cast<double>(batch.advantages.size());
    double var = 0.0;
    for (double a : batch.advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(batch.advantages.size());
    const double inv = 1.0 / std::sqrt(var + 1e-8);
    for (double& a : batch.advantages) a = (a - mean) * inv;

    policy.update(batch, update_rng);

    CurvePoint pt;
    pt.env_steps = result.env_steps_used;
    if (!batch_episode_returns.empty()) {
      double m = 0.0;
      for (double r : batch_episode_returns) m += r;
      m /= static_cast<double>(batch_episode_returns.size());
      double v = 0.0;
      for (double r : batch_episode_returns) v += (r - m) * (r - m);
      pt.mean_return = m;
      pt.std_return = std::sqrt(v / static_cast<double>(batch_episode_returns.size()));
    } else if (!result.curve.empty()) {
      pt.mean_return = result.curve.back().mean_return;
      pt.std_return = result.curve.back().std_return;
    }
    result.curve.push_back(pt);
  }

  // expert threshold from the tail of training returns
  if (!recent_returns.empty()) {
    const int window = std::min<int>(cfg.expert_window_episodes,
                                     static_cast<int>(recent_returns.size()));
    std::vector<double> tail(recent_returns.end() - window, recent_returns.end());
    std::sort(tail.begin(), tail.end());
    const auto idx = static_cast<std::size_t>(cfg.expert_percentile * (tail.size() - 1));
    result.expert_threshold = tail[idx];
  }
  return result;
}

std::vector<Trajectory> collect_dataset(PpoPolicy& policy, Env& env, int episodes,
                                        double expert_threshold, CollectMode mode,
                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trajectory> out;
  out.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    Trajectory traj;
    traj.scenario_id = env.scenario_id();
    std::vector<double> raw = env.reset(rng.next_u64());
    bool done = false;
    while (!done) {
      const std::vector<double> norm = policy.normalize_obs(raw);
      HybridAction a = mode == CollectMode::kGreedy ? policy.act_greedy(norm)
                                                    : policy.act_sampled(norm, rng);
      StepResult sr = env.step(a);
      traj.states.push_back(raw);
      traj.actions.push_back(a);
      traj.rewards.push_back(sr.reward);
      raw = sr.state;
      done = sr.done;
    }
    traj.recompute_returns();
    traj.expert = traj.total_return() >= expert_threshold;
    traj.validate();
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace dtrm
