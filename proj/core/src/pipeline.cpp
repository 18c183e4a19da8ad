#include "dtrm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dtrm/checkpoint.hpp"
#include "dtrm/dataset_io.hpp"
#include "dtrm/dt_train.hpp"
#include "dtrm/ppo.hpp"

namespace dtrm {

namespace {

namespace fs = std::filesystem;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void write_curve_csv(const fs::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "env_steps,mean_return,std_return\n";
  for (const CurvePoint& p : curve) {
    out << p.env_steps << ',' << format_double(p.mean_return) << ','
        << format_double(p.std_return) << '\n';
  }
}

void write_loss_csv(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out << i << ',' << format_double(losses[i]) << '\n';
  }
}

PpoPolicy make_ppo_for(const Env& env, const PpoConfig& cfg, std::uint64_t seed) {
  return PpoPolicy(env.state_dim(), env.action_spec(), cfg, seed);
}

double resolve_target_return(const std::string& rule, const ScenarioAdapter& adapter) {
  if (rule == "dataset_max") return adapter.rtg_scale;
  return std::stod(rule);
}

// Few-shot episodes from a from-scratch PPO interaction stream; expert flags
// by the percentile of realized returns within the collected set.
std::vector<Trajectory> collect_fewshot(const ScenarioSpec& spec, const FinetuneConfig& fcfg,
                                        const PpoConfig& pcfg, std::uint64_t seed) {
  auto env = make_env(spec);
  PpoPolicy source = make_ppo_for(*env, pcfg, seed);
  if (fcfg.source_ppo_steps > 0) {
    auto warm_env = make_env(spec);
    ppo_train(source, *warm_env, fcfg.source_ppo_steps, seed + 1);
  }
  std::vector<Trajectory> fewshot = collect_dataset(
      source, *env, fcfg.episodes, std::numeric_limits<double>::infinity(),
      CollectMode::kSampled, seed + 2);
  std::vector<double> returns;
  for (const Trajectory& t : fewshot) returns.push_back(t.total_return());
  std::vector<double> sorted = returns;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[static_cast<std::size_t>(0.8 * (sorted.size() - 1))];
  for (std::size_t i = 0; i < fewshot.size(); ++i) fewshot[i].expert = returns[i] >= threshold;
  return fewshot;
}

DtModel pretrain_model_from_dataset(const RunConfig& cfg, const Dataset& ds,
                                    std::vector<double>* loss_curve) {
  if (ds.trajectories.empty()) throw std::invalid_argument("pretrain: empty dataset");
  if (ds.task != cfg.task) throw std::invalid_argument("pretrain: dataset task mismatch");

  // prompt feature length is fixed per task family
  const auto& first = ds.scenarios.begin()->second;
  const int prompt_dim = static_cast<int>(make_env(first)->prompt_features().size());
  DtModel model(cfg.model, cfg.task, prompt_dim, cfg.seed);
  for (const auto& [sid, spec] : ds.scenarios) {
    register_scenario_from_data(model, spec, ds.trajectories);
  }
  DtTrainSchedule sched = cfg.pretrain.schedule;
  sched.seed = cfg.seed + 101;
  DtTrainResult r = dt_pretrain(model, ds.trajectories, sched);
  if (loss_curve) *loss_curve = r.loss_curve;
  return model;
}

}  // namespace

void cmd_collect(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  MetricsTable metrics;
  Dataset ds;
  ds.task = cfg.task;

  Rng seeder(cfg.seed);
  for (const ScenarioSpec& spec : cfg.scenarios) {
    const std::uint64_t sid_seed = seeder.next_u64();
    auto env = make_env(spec);
    PpoPolicy policy = make_ppo_for(*env, cfg.collect.ppo, sid_seed);

    const double t0 = now_seconds();
    PpoTrainResult train = ppo_train(policy, *env, cfg.collect.ppo_budget_steps, sid_seed + 1);
    const double train_secs = now_seconds() - t0;

    for (const CurvePoint& p : train.curve) {
      metrics.append({"ppo_train", spec.id(), p.env_steps, p.mean_return, p.std_return,
                      train_secs / static_cast<double>(train.curve.size())});
    }
    write_curve_csv(out_dir / ("ppo_curve_" + spec.id() + ".csv"), train.curve);

    const int total = cfg.collect.episodes_per_scenario;
    const int greedy = static_cast<int>(std::lround(total * cfg.collect.expert_fraction));
    auto expert = collect_dataset(policy, *env, greedy, train.expert_threshold,
                                  CollectMode::kGreedy, sid_seed + 2);
    auto sampled = collect_dataset(policy, *env, total - greedy, train.expert_threshold,
                                   CollectMode::kSampled, sid_seed + 3);
    ds.scenarios.emplace(spec.id(), spec);
    for (auto& t : expert) ds.trajectories.push_back(std::move(t));
    for (auto& t : sampled) ds.trajectories.push_back(std::move(t));
  }

  save_dataset(out_dir / "dataset.jsonl", ds);
  metrics.write_csv(out_dir / "metrics.csv");
  metrics.write_timings(out_dir / "timings.txt");
}

void cmd_pretrain(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (cfg.dataset_path.empty()) throw std::invalid_argument("pretrain: config lacks inputs.dataset");
  Dataset ds = load_dataset(cfg.dataset_path);

  MetricsTable metrics;
  const double t0 = now_seconds();
  std::vector<double> losses;
  DtModel model = pretrain_model_from_dataset(cfg, ds, &losses);
  const double secs = now_seconds() - t0;

  save_checkpoint(out_dir / "pretrained.ckpt", model);
  write_loss_csv(out_dir / "loss_curve.csv", losses);
  metrics.append({"pretrain", "all", static_cast<long>(losses.size()), losses.back(), 0.0, secs});
  metrics.write_csv(out_dir / "metrics.csv");
  metrics.write_timings(out_dir / "timings.txt");
}

void cmd_finetune(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (cfg.checkpoint_path.empty()) {
    throw std::invalid_argument("finetune: config lacks inputs.checkpoint");
  }
  if (cfg.finetune.scenario.empty()) {
    throw std::invalid_argument("finetune: no scenario configured");
  }
  const ScenarioSpec& spec = cfg.scenario(cfg.finetune.scenario);
  MetricsTable metrics;

  std::vector<Trajectory> fewshot =
      collect_fewshot(spec, cfg.finetune, cfg.collect.ppo, cfg.seed + 11);
  {
    Dataset fs_ds;
    fs_ds.task = cfg.task;
    fs_ds.scenarios.emplace(spec.id(), spec);
    fs_ds.trajectories = fewshot;
    save_dataset(out_dir / "fewshot.jsonl", fs_ds);
  }

  // paired evaluation: same fresh adapter, before and after training
  {
    DtModel pre = load_checkpoint(cfg.checkpoint_path);
    register_scenario_from_data(pre, spec, fewshot);
    auto env = make_env(spec);
    EvalSummary s = dt_evaluate(pre, *env, pre.adapter(spec.id()).rtg_scale,
                                cfg.evaluate.episodes, cfg.seed + 12);
    metrics.append({"finetune_pre_eval", spec.id(), 0, s.mean_return, s.std_return, 0.0});
  }

  DtModel model = load_checkpoint(cfg.checkpoint_path);
  FinetuneOptions opts;
  opts.schedule = cfg.finetune.schedule;
  opts.schedule.seed = cfg.seed + 13;
  opts.freeze = cfg.finetune.freeze;
  const double t0 = now_seconds();
  DtTrainResult r = dt_finetune(model, spec, fewshot, opts);
  const double secs = now_seconds() - t0;
  write_loss_csv(out_dir / "finetune_loss.csv", r.loss_curve);

  {
    auto env = make_env(spec);
    EvalSummary s = dt_evaluate(model, *env, model.adapter(spec.id()).rtg_scale,
                                cfg.evaluate.episodes, cfg.seed + 12);
    metrics.append({"finetune_post_eval", spec.id(), static_cast<long>(r.loss_curve.size()),
                    s.mean_return, s.std_return, secs});
  }

  save_checkpoint(out_dir / "finetuned.ckpt", model);
  metrics.write_csv(out_dir / "metrics.csv");
  metrics.write_timings(out_dir / "timings.txt");
}

void cmd_evaluate(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (cfg.checkpoint_path.empty()) {
    throw std::invalid_argument("evaluate: config lacks inputs.checkpoint");
  }
  if (cfg.evaluate.scenario.empty()) {
    throw std::invalid_argument("evaluate: no scenario configured");
  }
  DtModel model = load_checkpoint(cfg.checkpoint_path);
  if (!model.has_scenario(cfg.evaluate.scenario)) {
    throw std::invalid_argument("evaluate: checkpoint lacks scenario " + cfg.evaluate.scenario);
  }
  const ScenarioSpec& spec = cfg.scenario(cfg.evaluate.scenario);
  auto env = make_env(spec);
  const double target =
      resolve_target_return(cfg.evaluate.target_return, model.adapter(cfg.evaluate.scenario));

  const double t0 = now_seconds();
  EvalSummary s = dt_evaluate(model, *env, target, cfg.evaluate.episodes, cfg.seed + 21);
  const double secs = now_seconds() - t0;

  MetricsTable metrics;
  for (std::size_t e = 0; e < s.episode_returns.size(); ++e) {
    metrics.append({"evaluate_episode", spec.id(), static_cast<long>(e), s.episode_returns[e],
                    0.0, 0.0});
  }
  metrics.append({"evaluate_summary", spec.id(), static_cast<long>(s.episode_returns.size()),
                  s.mean_return, s.std_return, secs});
  metrics.write_csv(out_dir / "metrics.csv");
  metrics.write_timings(out_dir / "timings.txt");
}

double curve_plateau(const std::vector<std::pair<long, double>>& curve) {
  if (curve.empty()) throw std::invalid_argument("curve_plateau: empty curve");
  const std::size_t begin = curve.size() - std::max<std::size_t>(1, curve.size() / 4);
  double acc = 0.0;
  for (std::size_t i = begin; i < curve.size(); ++i) acc += curve[i].second;
  return acc / static_cast<double>(curve.size() - begin);
}

long steps_to_level(const std::vector<std::pair<long, double>>& curve, double level) {
  const int w = 5;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(w) ? i + 1 - w : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += curve[j].second;
    if (acc / static_cast<double>(i - lo + 1) >= level) return curve[i].first;
  }
  return -1;  // never reached
}

CompareSummary cmd_compare(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (cfg.checkpoint_path.empty()) {
    throw std::invalid_argument("compare: config lacks inputs.checkpoint");
  }
  if (cfg.compare.scenario.empty()) throw std::invalid_argument("compare: no scenario configured");
  const ScenarioSpec& spec = cfg.scenario(cfg.compare.scenario);
  const long budget = cfg.compare.budget_steps;
  MetricsTable metrics;

  // ---- PPO arm: from scratch on the new scenario
  std::vector<std::pair<long, double>> ppo_curve;
  std::vector<CurvePoint> ppo_points;
  {
    auto env = make_env(spec);
    PpoPolicy policy = make_ppo_for(*env, cfg.collect.ppo, cfg.seed + 31);
    PpoTrainResult r = ppo_train(policy, *env, budget, cfg.seed + 32);
    ppo_points = r.curve;
    for (const CurvePoint& p : r.curve) {
      ppo_curve.emplace_back(p.env_steps, p.mean_return);
      metrics.append({"compare_ppo", spec.id(), p.env_steps, p.mean_return, p.std_return, 0.0});
    }
  }

  // ---- random arm: same budget, uniform actions
  std::vector<std::pair<long, double>> random_curve;
  std::vector<CurvePoint> random_points;
  {
    auto env = make_env(spec);
    Rng rng(cfg.seed + 41);
    const HybridActionSpec& aspec = env->action_spec();
    long steps = 0;
    std::vector<double> window_returns;
    double ep_return = 0.0;
    env->reset(rng.next_u64());
    const int batch = cfg.collect.ppo.rollout_batch;
    while (steps < budget) {
      HybridAction a;
      for (int c : aspec.discrete_cardinalities) a.discrete.push_back(rng.uniform_int(c));
      for (const auto& [lo, hi] : aspec.continuous_bounds) a.continuous.push_back(rng.uniform(lo, hi));
      StepResult sr = env->step(a);
      ep_return += sr.reward;
      if (sr.done) {
        window_returns.push_back(ep_return);
        ep_return = 0.0;
        env->reset(rng.next_u64());
      }
      ++steps;
      if (steps % batch == 0 || steps == budget) {
        CurvePoint p;
        p.env_steps = steps;
        if (!window_returns.empty()) {
          double m = 0.0;
          for (double r : window_returns) m += r;
          m /= static_cast<double>(window_returns.size());
          double v = 0.0;
          for (double r : window_returns) v += (r - m) * (r - m);
          p.mean_return = m;
          p.std_return = std::sqrt(v / static_cast<double>(window_returns.size()));
        } else if (!random_points.empty()) {
          p.mean_return = random_points.back().mean_return;
          p.std_return = random_points.back().std_return;
        }
        random_points.push_back(p);
        random_curve.emplace_back(p.env_steps, p.mean_return);
        metrics.append({"compare_random", spec.id(), p.env_steps, p.mean_return, p.std_return, 0.0});
        window_returns.clear();
      }
    }
  }

  // ---- DT-FT arm: few-shot collection + fine-tuning from the checkpoint.
  // Env interaction is charged for the collected episodes only; after the
  // few-shot budget is spent the curve extends flat to the shared budget.
  std::vector<std::pair<long, double>> dt_curve;
  std::vector<CurvePoint> dt_points;
  {
    std::vector<Trajectory> fewshot =
        collect_fewshot(spec, cfg.compare.finetune, cfg.collect.ppo, cfg.seed + 51);

    auto eval_model = [&](DtModel& m, long env_steps) {
      auto env = make_env(spec);
      EvalSummary s = dt_evaluate(m, *env, m.adapter(spec.id()).rtg_scale,
                                  cfg.compare.eval_episodes, cfg.seed + 52);
      CurvePoint p{env_steps, s.mean_return, s.std_return};
      dt_points.push_back(p);
      dt_curve.emplace_back(env_steps, s.mean_return);
      metrics.append({"compare_dtft", spec.id(), env_steps, s.mean_return, s.std_return, 0.0});
    };

    // zero-shot: fresh adapter fitted to the few-shot statistics, no training
    {
      DtModel zero = load_checkpoint(cfg.checkpoint_path);
      register_scenario_from_data(zero, spec, fewshot);
      eval_model(zero, 0);
    }

    const int chunk = std::max(1, cfg.compare.fewshot_chunk);
    long ep_steps_acc = 0;
    std::vector<long> chunk_steps;  // env steps consumed by the first c episodes
    for (const Trajectory& t : fewshot) {
      ep_steps_acc += t.length();
      chunk_steps.push_back(ep_steps_acc);
    }
    DtModel final_model = load_checkpoint(cfg.checkpoint_path);  // placeholder until tuned
    bool final_ready = false;
    for (int c = chunk; c <= cfg.compare.fewshot_episodes; c += chunk) {
      const int count = std::min<int>(c, static_cast<int>(fewshot.size()));
      std::vector<Trajectory> subset(fewshot.begin(), fewshot.begin() + count);
      DtModel m = load_checkpoint(cfg.checkpoint_path);
      FinetuneOptions opts;
      opts.schedule = cfg.compare.finetune.schedule;
      opts.schedule.seed = cfg.seed + 53 + c;
      opts.freeze = cfg.compare.finetune.freeze;
      dt_finetune(m, spec, subset, opts);
      eval_model(m, chunk_steps[count - 1]);
      if (count == static_cast<int>(fewshot.size()) || c + chunk > cfg.compare.fewshot_episodes) {
        final_model = std::move(m);
        final_ready = true;
      }
    }
    if (!final_ready) throw std::logic_error("compare: no fine-tune chunks ran");

    // flat extension at the PPO checkpoint grid up to the shared budget
    const double final_mean = dt_points.back().mean_return;
    const double final_std = dt_points.back().std_return;
    for (const CurvePoint& p : ppo_points) {
      if (p.env_steps > dt_points.back().env_steps) {
        dt_points.push_back({p.env_steps, final_mean, final_std});
        dt_curve.emplace_back(p.env_steps, final_mean);
        metrics.append({"compare_dtft", spec.id(), p.env_steps, final_mean, final_std, 0.0});
      }
    }
    save_checkpoint(out_dir / "compare_dtft.ckpt", final_model);
  }

  // ---- aligned curves + speedup statistic
  {
    std::ofstream out(out_dir / "compare.csv");
    if (!out) throw std::runtime_error("cannot write compare.csv");
    out << "arm,env_steps,mean_return,std\n";
    for (const CurvePoint& p : dt_points) {
      out << "dtft," << p.env_steps << ',' << format_double(p.mean_return) << ','
          << format_double(p.std_return) << '\n';
    }
    for (const CurvePoint& p : ppo_points) {
      out << "ppo," << p.env_steps << ',' << format_double(p.mean_return) << ','
          << format_double(p.std_return) << '\n';
    }
    for (const CurvePoint& p : random_points) {
      out << "random," << p.env_steps << ',' << format_double(p.mean_return) << ','
          << format_double(p.std_return) << '\n';
    }
  }

  CompareSummary summary;
  summary.budget_steps = budget;
  summary.ppo_plateau = curve_plateau(ppo_curve);
  summary.dtft_plateau = curve_plateau(dt_curve);
  summary.random_plateau = curve_plateau(random_curve);
  summary.plateau_ratio =
      summary.ppo_plateau != 0.0 ? summary.dtft_plateau / summary.ppo_plateau : 0.0;
  const double level = 0.9 * summary.ppo_plateau;
  const long ppo_steps = steps_to_level(ppo_curve, level);
  long dt_steps = steps_to_level(dt_curve, level);
  if (dt_steps == 0) dt_steps = dt_curve.size() > 1 ? dt_curve[1].first : 1;  // resolution floor
  if (ppo_steps > 0 && dt_steps > 0) {
    summary.speedup = static_cast<double>(ppo_steps) / static_cast<double>(dt_steps);
  }

  {
    std::ofstream out(out_dir / "summary.csv");
    if (!out) throw std::runtime_error("cannot write summary.csv");
    out << "metric,value\n";
    out << "speedup," << format_double(summary.speedup) << '\n';
    out << "ppo_plateau," << format_double(summary.ppo_plateau) << '\n';
    out << "dtft_plateau," << format_double(summary.dtft_plateau) << '\n';
    out << "random_plateau," << format_double(summary.random_plateau) << '\n';
    out << "plateau_ratio," << format_double(summary.plateau_ratio) << '\n';
    out << "budget_steps_per_arm," << summary.budget_steps << '\n';
  }
  metrics.write_csv(out_dir / "metrics.csv");
  metrics.write_timings(out_dir / "timings.txt");
  return summary;
}

}  // namespace dtrm
