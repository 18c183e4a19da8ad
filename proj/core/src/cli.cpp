#include "dtrm/cli.hpp"

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dtrm/pipeline.hpp"

namespace dtrm {

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Decision-transformer resource management toolkit"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::string out;
    std::int64_t seed = -1;
    bool seed_given = false;
  };

  auto add_common = [](CLI::App* sub, Args& a) {
    sub->add_option("--config", a.config, "run configuration file")->required();
    sub->add_option("--out", a.out, "output directory")->required();
    sub->add_option("--seed", a.seed, "seed override");
  };

  Args args;
  CLI::App* collect = app.add_subcommand("collect", "train PPO per scenario and build a dataset");
  CLI::App* pretrain = app.add_subcommand("pretrain", "pre-train the sequence model on a dataset");
  CLI::App* finetune = app.add_subcommand("finetune", "few-shot fine-tune on a new scenario");
  CLI::App* evaluate = app.add_subcommand("evaluate", "roll out a checkpoint on one scenario");
  CLI::App* compare = app.add_subcommand("compare", "DT-FT vs PPO vs random on equal budgets");
  for (CLI::App* sub : {collect, pretrain, finetune, evaluate, compare}) add_common(sub, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg = load_run_config(args.config);
    if (app.count_all("--seed")) {
      cfg.seed = static_cast<std::uint64_t>(args.seed);
      cfg.seed_set = true;
    }
    cfg.validate();
    if (collect->parsed()) {
      cmd_collect(cfg, args.out);
    } else if (pretrain->parsed()) {
      cmd_pretrain(cfg, args.out);
    } else if (finetune->parsed()) {
      cmd_finetune(cfg, args.out);
    } else if (evaluate->parsed()) {
      cmd_evaluate(cfg, args.out);
    } else if (compare->parsed()) {
      CompareSummary s = cmd_compare(cfg, args.out);
      std::cout << "speedup=" << s.speedup << " ppo_plateau=" << s.ppo_plateau
                << " dtft_plateau=" << s.dtft_plateau << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dtrm
