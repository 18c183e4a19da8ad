#include "dtrm/dt_train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtrm/ops.hpp"
#include "dtrm/optim.hpp"
#include "dtrm/transformer.hpp"

namespace dtrm {

namespace {

std::map<std::string, std::vector<const Trajectory*>> group_by_scenario(
    const std::vector<Trajectory>& dataset) {
  std::map<std::string, std::vector<const Trajectory*>> by_sid;
  for (const Trajectory& t : dataset) {
    if (t.returns_to_go.size() != t.rewards.size()) {
      throw std::invalid_argument("dt train: trajectory lacks returns_to_go");
    }
    by_sid[t.scenario_id].push_back(&t);
  }
  return by_sid;
}

std::vector<Tensor> trainable_parameters(DtModel& model) {
  std::vector<Tensor> params;
  model.visit_parameters([&](const std::string&, Tensor& t) { params.push_back(t); });
  return params;
}

DtTrainResult run_training(DtModel& model, const std::vector<Trajectory>& dataset,
                           const DtTrainSchedule& schedule, const DtModel* teacher,
                           double beta) {
  if (dataset.empty()) throw std::invalid_argument("dt train: empty dataset");
  if (schedule.steps < 1 || schedule.batch_size < 1) {
    throw std::invalid_argument("dt train: bad schedule");
  }
  auto by_sid = group_by_scenario(dataset);
  std::vector<std::string> sids;
  for (const auto& [sid, trajs] : by_sid) {
    if (!model.has_scenario(sid)) {
      throw std::invalid_argument("dt train: scenario not registered: " + sid);
    }
    sids.push_back(sid);
  }

  AdamWConfig ocfg;
  ocfg.lr = schedule.lr;
  ocfg.weight_decay = schedule.weight_decay;
  AdamW opt(trainable_parameters(model), ocfg);

  Rng rng(schedule.seed);
  Rng dropout_rng = rng.derive(17);
  const int k = model.config().context_len;

  DtTrainResult result;
  result.loss_curve.reserve(schedule.steps);
  for (int step = 0; step < schedule.steps; ++step) {
    Tensor batch_loss = Tensor::zeros({1});
    double weight_sum = 0.0;
    bool first = true;
    for (int b = 0; b < schedule.batch_size; ++b) {
      const std::string& sid = sids[rng.uniform_int(static_cast<int>(sids.size()))];
      const auto& trajs = by_sid[sid];
      const Trajectory* traj = trajs[rng.uniform_int(static_cast<int>(trajs.size()))];
      const int t_end = 1 + rng.uniform_int(traj->length());
      WindowRef w;
      w.traj = traj;
      w.begin = std::max(0, t_end - k);
      w.end = t_end;
      w.weight = traj->expert ? 1.0 : schedule.nonexpert_weight;
      Tensor loss = scale(model.window_loss(w, true, &dropout_rng), w.weight);
      weight_sum += w.weight;
      batch_loss = first ? loss : add(batch_loss, loss);
      first = false;
    }
    batch_loss = scale(batch_loss, 1.0 / weight_sum);
    if (teacher) {
      batch_loss = add(batch_loss, scale(similarity_loss(model, *teacher), beta));
    }
    opt.zero_grad();
    backward(batch_loss);
    opt.step();
    result.loss_curve.push_back(batch_loss.value());
  }
  return result;
}

}  // namespace

void register_scenario_from_data(DtModel& model, const ScenarioSpec& spec,
                                 const std::vector<Trajectory>& trajectories) {
  const std::string& sid = spec.id();
  std::vector<const Trajectory*> own;
  for (const Trajectory& t : trajectories) {
    if (t.scenario_id == sid) own.push_back(&t);
  }
  if (own.empty()) throw std::invalid_argument("no trajectories for scenario: " + sid);

  auto env = make_env(spec);
  const int dim = env->state_dim();

  // feature normalizer over every visited state
  std::vector<double> mean(dim, 0.0), m2(dim, 0.0);
  long count = 0;
  double max_ret = 0.0;
  for (const Trajectory* t : own) {
    if (t->returns_to_go.empty()) {
      throw std::invalid_argument("register_scenario: returns_to_go missing");
    }
    max_ret = std::max(max_ret, t->total_return());
    for (const auto& s : t->states) {
      if (static_cast<int>(s.size()) != dim) {
        throw std::invalid_argument("register_scenario: state dim mismatch for " + sid);
      }
      ++count;
      for (int i = 0; i < dim; ++i) {
        const double delta = s[i] - mean[i];
        mean[i] += delta / static_cast<double>(count);
        m2[i] += delta * (s[i] - mean[i]);
      }
    }
  }
  std::vector<double> stddev(dim);
  for (int i = 0; i < dim; ++i) {
    stddev[i] = count > 1 ? std::sqrt(std::max(m2[i] / (count - 1), 1e-12)) : 1.0;
  }
  const double rtg_scale = std::max(1e-6, max_ret);

  model.add_scenario(sid, dim, env->action_spec(), env->prompt_features(), std::move(mean),
                     std::move(stddev), rtg_scale);
}

DtTrainResult dt_pretrain(DtModel& model, const std::vector<Trajectory>& dataset,
                          const DtTrainSchedule& schedule) {
  return run_training(model, dataset, schedule, nullptr, 0.0);
}

FreezeSpec default_finetune_freeze() { return FreezeSpec{{"trunk", "embed"}}; }

DtTrainResult dt_finetune(DtModel& model, const ScenarioSpec& new_scenario,
                          const std::vector<Trajectory>& fewshot, const FinetuneOptions& opts) {
  if (fewshot.empty()) throw std::invalid_argument("finetune: empty few-shot set");
  if (model.has_scenario(new_scenario.id())) {
    throw std::invalid_argument("finetune: scenario already registered: " + new_scenario.id());
  }
  for (const Trajectory& t : fewshot) {
    if (t.scenario_id != new_scenario.id()) {
      throw std::invalid_argument("finetune: few-shot trajectory from wrong scenario");
    }
  }
  register_scenario_from_data(model, new_scenario, fewshot);

  model.set_frozen(opts.freeze, true);
  DtTrainResult result;
  try {
    result = run_training(model, fewshot, opts.schedule, nullptr, 0.0);
  } catch (...) {
    model.set_frozen(opts.freeze, false);
    throw;
  }
  model.set_frozen(opts.freeze, false);
  return result;
}

Tensor similarity_loss(DtModel& student, const DtModel& teacher) {
  const TransformerConfig& scfg = student.config().trunk;
  const TransformerConfig& tcfg = teacher.config().trunk;
  const int d = scfg.model_dim;
  const int heads = scfg.num_heads;
  if (d != tcfg.model_dim || heads != tcfg.num_heads) {
    throw std::invalid_argument("similarity_loss: student/teacher dims disagree");
  }
  const int hd = d / heads;
  const bool collapse = scfg.shared_heads() && !tcfg.shared_heads();

  std::map<std::string, Tensor> teacher_params;
  for (const auto& [name, t] : teacher.named_parameters()) teacher_params.emplace(name, t);

  // teacher [d×d] per-head blocks averaged into a [d×hd] target
  auto mean_blocks = [&](const Tensor& w) {
    Tensor out = Tensor::zeros({d, hd});
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (int h = 0; h < heads; ++h) {
          acc += (*w.data)[static_cast<std::size_t>(r) * d + h * hd + c];
        }
        (*out.data)[static_cast<std::size_t>(r) * hd + c] = acc / heads;
      }
    }
    return out;
  };
  auto mean_bias_blocks = [&](const Tensor& b) {
    Tensor out = Tensor::zeros({hd});
    for (int c = 0; c < hd; ++c) {
      double acc = 0.0;
      for (int h = 0; h < heads; ++h) acc += (*b.data)[static_cast<std::size_t>(h) * hd + c];
      (*out.data)[c] = acc / heads;
    }
    return out;
  };

  Tensor total = Tensor::zeros({1});
  bool first = true;
  std::size_t mapped_count = 0;
  student.visit_parameters([&](const std::string& name, Tensor& s) {
    auto it = teacher_params.find(name);
    if (it == teacher_params.end()) {
      throw std::invalid_argument("similarity_loss: unmapped parameter " + name);
    }
    Tensor target = it->second;
    if (target.shape != s.shape) {
      const bool attn_proj = name.find(".attn.w") != std::string::npos;
      const bool attn_bias = name.find(".attn.bk") != std::string::npos ||
                             name.find(".attn.bv") != std::string::npos;
      const bool attn_qbias = name.find(".attn.bq") != std::string::npos;
      if (collapse && attn_proj) {
        target = mean_blocks(target);
      } else if (collapse && attn_bias) {
        target = mean_bias_blocks(target);
      } else if (collapse && attn_qbias && target.numel() == s.numel()) {
        // teacher [d] query bias regarded as [H×hd]
        target = Tensor::from_values(s.shape, *target.data);
      } else {
        throw std::invalid_argument("similarity_loss: shape mismatch at " + name);
      }
    }
    Tensor diff = sub(flatten(s), flatten(target.detached_copy()));
    Tensor sq = sum_all(mul(diff, diff));
    total = first ? sq : add(total, sq);
    first = false;
    mapped_count += s.numel();
  });
  if (mapped_count == 0) throw std::invalid_argument("similarity_loss: nothing mapped");
  return scale(total, 1.0 / static_cast<double>(mapped_count));
}

DtTrainResult dt_distill(DtModel& student, const DtModel& teacher,
                         const std::vector<Trajectory>& dataset, const DtTrainSchedule& schedule,
                         double beta) {
  return run_training(student, dataset, schedule, &teacher, beta);
}

DtRolloutResult dt_rollout(const DtModel& model, Env& env, double target_return,
                           std::uint64_t seed) {
  DtRolloutResult out;
  out.trajectory.scenario_id = env.scenario_id();

  DtContext ctx;
  ctx.scenario_id = env.scenario_id();
  ctx.target_return = target_return;
  ctx.states.push_back(env.reset(seed));

  bool done = false;
  while (!done) {
    HybridAction a = model.predict_action(ctx);
    StepResult sr = env.step(a);
    out.trajectory.states.push_back(ctx.states.back());
    out.trajectory.actions.push_back(a);
    out.trajectory.rewards.push_back(sr.reward);
    ctx.actions.push_back(std::move(a));
    ctx.rewards.push_back(sr.reward);
    out.achieved_return += sr.reward;
    done = sr.done;
    if (!done) ctx.states.push_back(sr.state);
  }
  out.trajectory.recompute_returns();
  return out;
}

EvalSummary dt_evaluate(const DtModel& model, Env& env, double target_return, int episodes,
                        std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("dt_evaluate: episodes must be >= 1");
  Rng rng(seed);
  EvalSummary s;
  s.episode_returns.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    s.episode_returns.push_back(dt_rollout(model, env, target_return, rng.next_u64())
                                    .achieved_return);
  }
  double m = 0.0;
  for (double r : s.episode_returns) m += r;
  m /= episodes;
  double v = 0.0;
  for (double r : s.episode_returns) v += (r - m) * (r - m);
  s.mean_return = m;
  s.std_return = std::sqrt(v / episodes);
  return s;
}

}  // namespace dtrm
