#include "dtrm/dt_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtrm/ops.hpp"

namespace dtrm {

void DtConfig::validate() const {
  trunk.validate();
  if (context_len < 1) throw std::invalid_argument("dt: context_len must be >= 1");
  if (max_timestep < 1) throw std::invalid_argument("dt: max_timestep must be >= 1");
  if (trunk.max_sequence_len < max_tokens()) {
    throw std::invalid_argument("dt: trunk max_sequence_len below token budget");
  }
}

bool FreezeSpec::matches(const std::string& param_name) const {
  for (const std::string& p : frozen_prefixes) {
    if (p == "all") return true;
    if (param_name.size() >= p.size() && param_name.compare(0, p.size(), p) == 0) {
      // prefix must end on a group boundary
      if (param_name.size() == p.size() || param_name[p.size()] == '.') return true;
    }
  }
  return false;
}

int nearest_codebook_row(const Tensor& codebook, const std::vector<double>& v) {
  if (codebook.shape.size() != 2) throw std::invalid_argument("codebook must be 2-D");
  const int c = codebook.shape[0], d = codebook.shape[1];
  if (static_cast<int>(v.size()) != d) {
    throw std::invalid_argument("nearest_codebook_row: dimension mismatch");
  }
  if (c == 0) throw std::invalid_argument("nearest_codebook_row: empty codebook");
  int best = 0;
  double best_dist = 0.0;
  for (int i = 0; i < c; ++i) {
    const double* rowp = codebook.data->data() + static_cast<std::size_t>(i) * d;
    double dist = 0.0;
    for (int j = 0; j < d; ++j) {
      const double e = v[j] - rowp[j];
      dist += e * e;
    }
    if (i == 0 || dist < best_dist) {  // strict <: lowest index wins ties
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

namespace {

Tensor rand_weight(Rng& rng, const std::vector<int>& shape, double std_dev) {
  Tensor t = Tensor::zeros(shape, true);
  for (double& v : *t.data) v = rng.normal(0.0, std_dev);
  return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

DtModel::DtModel(DtConfig cfg, std::string task_family, int prompt_feature_dim,
                 std::uint64_t seed)
    : cfg_(cfg),
      task_family_(std::move(task_family)),
      prompt_feature_dim_(prompt_feature_dim),
      init_seed_(seed),
      init_rng_(seed),
      trunk_((cfg_.trunk.max_sequence_len =
                  std::max(cfg_.trunk.max_sequence_len, cfg_.max_tokens()),
              cfg_.trunk),
             init_rng_) {
  cfg_.validate();
  const int d = cfg_.trunk.model_dim;
  head_norm_g = Tensor::full({d}, 1.0, true);
  head_norm_b = Tensor::zeros({d}, true);
  rtg_w = rand_weight(init_rng_, {1, d}, kInitStd);
  rtg_b = Tensor::zeros({d}, true);
  prompt_w = rand_weight(init_rng_, {1 + prompt_feature_dim_, d}, kInitStd);
  prompt_b = Tensor::zeros({d}, true);
  time_table = rand_weight(init_rng_, {cfg_.max_timestep, d}, kInitStd);
}

ScenarioAdapter& DtModel::adapter(const std::string& id) {
  auto it = adapters_.find(id);
  if (it == adapters_.end()) throw std::invalid_argument("unknown scenario: " + id);
  return it->second;
}

const ScenarioAdapter& DtModel::adapter(const std::string& id) const {
  auto it = adapters_.find(id);
  if (it == adapters_.end()) throw std::invalid_argument("unknown scenario: " + id);
  return it->second;
}

std::vector<std::string> DtModel::scenario_ids() const {
  std::vector<std::string> ids;
  ids.reserve(adapters_.size());
  for (const auto& [id, a] : adapters_) ids.push_back(id);
  return ids;
}

void DtModel::add_scenario(const std::string& id, int state_dim, const HybridActionSpec& spec,
                           std::vector<double> prompt_features, std::vector<double> state_mean,
                           std::vector<double> state_std, double rtg_scale) {
  if (has_scenario(id)) throw std::invalid_argument("scenario already registered: " + id);
  if (static_cast<int>(prompt_features.size()) != prompt_feature_dim_) {
    throw std::invalid_argument("scenario prompt feature length mismatch: " + id);
  }
  if (static_cast<int>(state_mean.size()) != state_dim ||
      static_cast<int>(state_std.size()) != state_dim) {
    throw std::invalid_argument("scenario normalizer length mismatch: " + id);
  }
  const int d = cfg_.trunk.model_dim;
  const int num_parts = spec.num_discrete() + spec.num_continuous();
  if (num_parts == 0) throw std::invalid_argument("scenario has no action parts: " + id);
  const int cb_dim = std::max(1, d / num_parts);

  ScenarioAdapter a;
  a.scenario_id = id;
  a.state_dim = state_dim;
  a.action_spec = spec;
  a.prompt_features = std::move(prompt_features);
  a.state_mean = std::move(state_mean);
  a.state_std = std::move(state_std);
  a.rtg_scale = rtg_scale;
  a.codebook_dim = cb_dim;
  a.action_feat_dim = spec.num_discrete() * cb_dim + spec.num_continuous();

  // Copy from the dimensionally nearest existing adapter whenever the shape
  // agrees; otherwise start from small random values.
  std::vector<const ScenarioAdapter*> donors;
  for (const auto& [did, da] : adapters_) donors.push_back(&da);
  std::sort(donors.begin(), donors.end(),
            [&](const ScenarioAdapter* x, const ScenarioAdapter* y) {
              return std::abs(x->state_dim - state_dim) < std::abs(y->state_dim - state_dim);
            });
  auto init_from_donor = [&](const std::vector<int>& shape,
                             const std::function<const Tensor*(const ScenarioAdapter&)>& get) {
    for (const ScenarioAdapter* donor : donors) {
      const Tensor* t = get(*donor);
      if (t && t->defined() && t->shape == shape) {
        Tensor copy = Tensor::zeros(shape, true);
        *copy.data = *t->data;
        return copy;
      }
    }
    return rand_weight(init_rng_, shape, kInitStd);
  };

  a.state_w = init_from_donor({state_dim, d},
                              [](const ScenarioAdapter& s) { return &s.state_w; });
  a.state_b = init_from_donor({d}, [](const ScenarioAdapter& s) { return &s.state_b; });
  a.action_w = init_from_donor({a.action_feat_dim, d},
                               [](const ScenarioAdapter& s) { return &s.action_w; });
  a.action_b = init_from_donor({d}, [](const ScenarioAdapter& s) { return &s.action_b; });

  for (int p = 0; p < spec.num_discrete(); ++p) {
    const std::vector<int> cb_shape = {spec.discrete_cardinalities[p], cb_dim};
    a.codebooks.push_back(init_from_donor(cb_shape, [p](const ScenarioAdapter& s) {
      return p < static_cast<int>(s.codebooks.size()) ? &s.codebooks[p] : nullptr;
    }));
    a.head_disc_w.push_back(init_from_donor({d, cb_dim}, [p](const ScenarioAdapter& s) {
      return p < static_cast<int>(s.head_disc_w.size()) ? &s.head_disc_w[p] : nullptr;
    }));
    a.head_disc_b.push_back(init_from_donor({cb_dim}, [p](const ScenarioAdapter& s) {
      return p < static_cast<int>(s.head_disc_b.size()) ? &s.head_disc_b[p] : nullptr;
    }));
  }
  for (int j = 0; j < spec.num_continuous(); ++j) {
    a.head_cont_w.push_back(init_from_donor({d + j, 1}, [j](const ScenarioAdapter& s) {
      return j < static_cast<int>(s.head_cont_w.size()) ? &s.head_cont_w[j] : nullptr;
    }));
    a.head_cont_b.push_back(init_from_donor({1}, [j](const ScenarioAdapter& s) {
      return j < static_cast<int>(s.head_cont_b.size()) ? &s.head_cont_b[j] : nullptr;
    }));
  }
  adapters_.emplace(id, std::move(a));
}

Tensor DtModel::embed_action_features(const ScenarioAdapter& a, const HybridAction& action) const {
  validate_action(action, a.action_spec);
  std::vector<Tensor> parts;
  parts.reserve(a.action_spec.num_discrete() + 1);
  for (int p = 0; p < a.action_spec.num_discrete(); ++p) {
    Tensor cb_row = gather_rows(a.codebooks[p], {action.discrete[p]});
    parts.push_back(flatten(cb_row));
  }
  if (a.action_spec.num_continuous() > 0) {
    parts.push_back(Tensor::from_values({a.action_spec.num_continuous()}, action.continuous));
  }
  return concat_vec(parts);
}

std::vector<Tensor> DtModel::forward_steps(const ScenarioAdapter& a, double prompt_return_scaled,
                                           const std::vector<StepInput>& steps, bool train,
                                           Rng* dropout_rng) const {
  if (steps.empty()) throw std::invalid_argument("dt forward: no steps");
  if (static_cast<int>(steps.size()) > cfg_.context_len) {
    throw std::invalid_argument("dt forward: window exceeds context_len");
  }

  std::vector<double> prompt_vec;
  prompt_vec.reserve(1 + a.prompt_features.size());
  prompt_vec.push_back(prompt_return_scaled);
  prompt_vec.insert(prompt_vec.end(), a.prompt_features.begin(), a.prompt_features.end());

  std::vector<Tensor> rows;
  rows.reserve(1 + 3 * steps.size());
  rows.push_back(linear(Tensor::from_values({1 + prompt_feature_dim_}, prompt_vec), prompt_w,
                        prompt_b));

  std::vector<int> state_positions;
  for (const StepInput& s : steps) {
    const int t = std::min(s.timestep, cfg_.max_timestep - 1);
    Tensor tvec = flatten(gather_rows(time_table, {t}));

    rows.push_back(add(linear(Tensor::from_values({1}, {s.rtg_scaled}), rtg_w, rtg_b), tvec));

    std::vector<double> norm_state(a.state_dim);
    if (static_cast<int>(s.state->size()) != a.state_dim) {
      throw std::invalid_argument("dt forward: state dim mismatch");
    }
    for (int i = 0; i < a.state_dim; ++i) {
      norm_state[i] = ((*s.state)[i] - a.state_mean[i]) / a.state_std[i];
    }
    state_positions.push_back(static_cast<int>(rows.size()));
    rows.push_back(add(linear(Tensor::from_values({a.state_dim}, norm_state), a.state_w,
                              a.state_b),
                       tvec));

    if (s.action != nullptr) {
      rows.push_back(
          add(linear(embed_action_features(a, *s.action), a.action_w, a.action_b), tvec));
    }
  }

  Tensor x = stack_rows(rows);
  if (train && cfg_.trunk.dropout_rate > 0.0) {
    x = dropout(x, cfg_.trunk.dropout_rate, *dropout_rng, true);
  }
  Tensor h = trunk_.forward(x, train, dropout_rng);
  h = layer_norm(h, head_norm_g, head_norm_b, cfg_.trunk.layer_norm_eps);

  std::vector<Tensor> outputs;
  outputs.reserve(steps.size());
  for (int pos : state_positions) outputs.push_back(row(h, pos));
  return outputs;
}

Tensor DtModel::window_loss(const WindowRef& w, bool train, Rng* dropout_rng) const {
  if (!w.traj) throw std::invalid_argument("window_loss: null trajectory");
  if (w.begin < 0 || w.end <= w.begin || w.end > w.traj->length()) {
    throw std::invalid_argument("window_loss: bad window bounds");
  }
  if (w.traj->returns_to_go.size() != w.traj->rewards.size()) {
    throw std::invalid_argument("window_loss: returns_to_go missing");
  }
  const ScenarioAdapter& a = adapter(w.traj->scenario_id);

  std::vector<StepInput> steps;
  steps.reserve(w.end - w.begin);
  for (int t = w.begin; t < w.end; ++t) {
    StepInput s;
    s.rtg_scaled = w.traj->returns_to_go[t] / a.rtg_scale;
    s.state = &w.traj->states[t];
    s.action = &w.traj->actions[t];
    s.timestep = t;
    steps.push_back(s);
  }
  const double prompt_ret = w.traj->total_return() / a.rtg_scale;
  std::vector<Tensor> outs = forward_steps(a, prompt_ret, steps, train, dropout_rng);

  Tensor total = Tensor::zeros({1});
  bool first = true;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const HybridAction& target = w.traj->actions[w.begin + static_cast<int>(i)];
    Tensor slot = Tensor::zeros({1});
    bool slot_first = true;
    for (int p = 0; p < a.action_spec.num_discrete(); ++p) {
      Tensor pred = linear(outs[i], a.head_disc_w[p], a.head_disc_b[p]);
      Tensor logits = neg_sqdist(pred, a.codebooks[p]);
      Tensor ce = cross_entropy_logits(logits, {target.discrete[p]});
      slot = slot_first ? ce : add(slot, ce);
      slot_first = false;
    }
    for (int j = 0; j < a.action_spec.num_continuous(); ++j) {
      // teacher forcing: earlier continuous parts come from the target action
      std::vector<Tensor> in_parts = {outs[i]};
      if (j > 0) {
        in_parts.push_back(Tensor::from_values(
            {j}, std::vector<double>(target.continuous.begin(), target.continuous.begin() + j)));
      }
      Tensor pred = linear(concat_vec(in_parts), a.head_cont_w[j], a.head_cont_b[j]);
      Tensor m = mse_loss(pred, Tensor::from_values({1}, {target.continuous[j]}));
      slot = slot_first ? m : add(slot, m);
      slot_first = false;
    }
    total = first ? slot : add(total, slot);
    first = false;
  }
  return scale(total, 1.0 / static_cast<double>(outs.size()));
}

HybridAction DtModel::predict_action(const DtContext& ctx) const {
  const ScenarioAdapter& a = adapter(ctx.scenario_id);
  const int cur = static_cast<int>(ctx.states.size()) - 1;
  if (cur < 0) throw std::invalid_argument("predict_action: no current state");
  if (static_cast<int>(ctx.actions.size()) != cur ||
      static_cast<int>(ctx.rewards.size()) != cur) {
    throw std::invalid_argument("predict_action: context lengths disagree");
  }

  NoGradGuard ng;

  // return-to-go tokens: target minus accrued rewards so far, floored at 0
  std::vector<double> rtg(cur + 1);
  double accrued = 0.0;
  for (int t = 0; t <= cur; ++t) {
    rtg[t] = std::max(0.0, ctx.target_return - accrued);
    if (t < cur) accrued += ctx.rewards[t];
  }

  const int begin = std::max(0, cur + 1 - cfg_.context_len);  // evict oldest
  std::vector<StepInput> steps;
  for (int t = begin; t <= cur; ++t) {
    StepInput s;
    s.rtg_scaled = rtg[t] / a.rtg_scale;
    s.state = &ctx.states[t];
    s.action = t < cur ? &ctx.actions[t] : nullptr;
    s.timestep = t;
    steps.push_back(s);
  }

  std::vector<Tensor> outs =
      forward_steps(a, ctx.target_return / a.rtg_scale, steps, false, nullptr);
  const Tensor& h = outs.back();

  HybridAction action;
  for (int p = 0; p < a.action_spec.num_discrete(); ++p) {
    Tensor pred = linear(h, a.head_disc_w[p], a.head_disc_b[p]);
    action.discrete.push_back(nearest_codebook_row(a.codebooks[p], *pred.data));
  }
  for (int j = 0; j < a.action_spec.num_continuous(); ++j) {
    std::vector<Tensor> in_parts = {h};
    if (j > 0) in_parts.push_back(Tensor::from_values({j}, action.continuous));
    Tensor pred = linear(concat_vec(in_parts), a.head_cont_w[j], a.head_cont_b[j]);
    const auto [lo, hi] = a.action_spec.continuous_bounds[j];
    action.continuous.push_back(std::clamp(pred.value(), lo, hi));
  }
  return action;
}

void DtModel::visit_parameters(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < static_cast<std::size_t>(trunk_.num_blocks()); ++i) {
    BlockParams& b = trunk_.block(static_cast<int>(i));
    const std::string p = "trunk.b" + std::to_string(i) + ".";
    fn(p + "ln1.g", b.ln1_g);
    fn(p + "ln1.b", b.ln1_b);
    fn(p + "attn.wq", b.attn.wq);
    fn(p + "attn.bq", b.attn.bq);
    fn(p + "attn.wk", b.attn.wk);
    fn(p + "attn.bk", b.attn.bk);
    fn(p + "attn.wv", b.attn.wv);
    fn(p + "attn.bv", b.attn.bv);
    fn(p + "attn.wo", b.attn.wo);
    fn(p + "attn.bo", b.attn.bo);
    fn(p + "ln2.g", b.ln2_g);
    fn(p + "ln2.b", b.ln2_b);
    fn(p + "ffn.w1", b.ffn_w1);
    fn(p + "ffn.b1", b.ffn_b1);
    fn(p + "ffn.w2", b.ffn_w2);
    fn(p + "ffn.b2", b.ffn_b2);
  }
  fn("embed.rtg.w", rtg_w);
  fn("embed.rtg.b", rtg_b);
  fn("embed.prompt.w", prompt_w);
  fn("embed.prompt.b", prompt_b);
  fn("embed.time.table", time_table);
  fn("head_norm.g", head_norm_g);
  fn("head_norm.b", head_norm_b);
  for (auto& [id, a] : adapters_) {
    const std::string p = "adapter." + id + ".";
    fn(p + "state.w", a.state_w);
    fn(p + "state.b", a.state_b);
    fn(p + "action.w", a.action_w);
    fn(p + "action.b", a.action_b);
    for (std::size_t i = 0; i < a.codebooks.size(); ++i) {
      fn(p + "codebook" + std::to_string(i), a.codebooks[i]);
      fn(p + "head.disc" + std::to_string(i) + ".w", a.head_disc_w[i]);
      fn(p + "head.disc" + std::to_string(i) + ".b", a.head_disc_b[i]);
    }
    for (std::size_t j = 0; j < a.head_cont_w.size(); ++j) {
      fn(p + "head.cont" + std::to_string(j) + ".w", a.head_cont_w[j]);
      fn(p + "head.cont" + std::to_string(j) + ".b", a.head_cont_b[j]);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> DtModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const_cast<DtModel*>(this)->visit_parameters(
      [&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

void DtModel::set_frozen(const FreezeSpec& freeze, bool frozen) {
  visit_parameters([&](const std::string& name, Tensor& t) {
    if (freeze.matches(name)) {
      t.requires_grad = !frozen;
      if (!frozen && !t.grad) {
        t.grad = std::make_shared<std::vector<double>>(t.numel(), 0.0);
      }
    }
  });
}

std::size_t DtModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

}  // namespace dtrm
