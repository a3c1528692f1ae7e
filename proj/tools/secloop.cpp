// secloop: scenario validation, training, evaluation and replay.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "secloop/app.hpp"

int main(int argc, char** argv) {
  using namespace secloop;
  using namespace secloop::app;

  CLI::App cli{"secloop - closed-loop security strategy training on a simulated battlefield"};
  cli.require_subcommand(1);

  auto* scenario = cli.add_subcommand("scenario", "scenario file utilities");
  scenario->require_subcommand(1);
  auto* validate = scenario->add_subcommand("validate", "schema and solvability check");
  std::string validate_path;
  validate->add_option("path", validate_path, "scenario file")->required();

  auto* train = cli.add_subcommand("train", "run SA-GRPO training");
  std::string config_path;
  TrainOverrides ov;
  std::uint64_t seed = 0;
  std::size_t n_env = 0, group_size = 0, steps = 0;
  std::string out_dir;
  train->add_option("--config", config_path, "run configuration (JSON)")->required();
  auto* seed_opt = train->add_option("--seed", seed, "run seed");
  auto* nenv_opt = train->add_option("--n-env", n_env, "parallel battlefield instances");
  auto* g_opt = train->add_option("--group-size", group_size, "outputs per prompt (G)");
  auto* steps_opt = train->add_option("--steps", steps, "outer steps (M)");
  auto* out_opt = train->add_option("--out", out_dir, "output directory");

  auto* eval = cli.add_subcommand("eval", "evaluate a checkpoint");
  EvalRequest er;
  std::string eval_format = "human", eval_judge;
  std::string eval_out;
  eval->add_option("--checkpoint", er.checkpoint, "policy checkpoint")->required();
  eval->add_option("--scenario", er.scenario_paths, "scenario file (repeatable)")->required();
  eval->add_option("--episodes", er.options.episodes, "episodes per scenario")->capture_default_str();
  eval->add_option("--seed", er.options.seed, "evaluation seed")->capture_default_str();
  eval->add_option("--n-env", er.options.n_env, "concurrent episodes")->capture_default_str();
  eval->add_option("--max-len", er.options.max_len, "token budget")->capture_default_str();
  eval->add_flag("--sample", er.options.sampled, "sample instead of greedy decoding");
  eval->add_option("--temperature", er.options.temperature, "sampling temperature");
  auto* eval_out_opt = eval->add_option("--out", eval_out, "write eval_report.json here");
  eval->add_flag("--dump-episodes", er.dump_episodes, "also write eval_episodes.jsonl");
  eval->add_option("--format", eval_format, "human or records")->check(CLI::IsMember({"human", "records"}));
  eval->add_option("--judge-endpoint", eval_judge, "remote judge host:port[/path]");

  auto* replay = cli.add_subcommand("replay", "print one full episode trace");
  ReplayRequest rr;
  std::string replay_format = "human", replay_judge;
  std::string replay_scenario;
  replay->add_option("--checkpoint", rr.checkpoint, "policy checkpoint")->required();
  replay->add_option("--scenario", replay_scenario, "scenario file")->required();
  replay->add_option("--seed", rr.seed, "episode seed")->capture_default_str();
  replay->add_option("--episode", rr.episode, "episode index")->capture_default_str();
  replay->add_option("--max-len", rr.max_len, "token budget")->capture_default_str();
  replay->add_flag("--sample", rr.sampled, "sample instead of greedy decoding");
  replay->add_option("--temperature", rr.temperature, "sampling temperature");
  replay->add_option("--format", replay_format, "human or records")->check(CLI::IsMember({"human", "records"}));
  replay->add_option("--judge-endpoint", replay_judge, "remote judge host:port[/path]");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  if (validate->parsed()) return cmd_scenario_validate(validate_path, std::cout, std::cerr);

  if (train->parsed()) {
    if (*seed_opt) ov.seed = seed;
    if (*nenv_opt) ov.n_env = n_env;
    if (*g_opt) ov.group_size = group_size;
    if (*steps_opt) ov.steps = steps;
    if (*out_opt) ov.out = out_dir;
    return cmd_train(config_path, ov, std::cout, std::cerr);
  }

  if (eval->parsed()) {
    return guarded(std::cerr, [&] {
      er.format = parse_format(eval_format);
      if (*eval_out_opt) er.out = eval_out;
      if (!eval_judge.empty()) er.judge = parse_judge_endpoint(eval_judge);
      return cmd_eval(er, std::cout, std::cerr);
    });
  }

  if (replay->parsed()) {
    return guarded(std::cerr, [&] {
      rr.format = parse_format(replay_format);
      rr.scenario_path = replay_scenario;
      if (!replay_judge.empty()) rr.judge = parse_judge_endpoint(replay_judge);
      return cmd_replay(rr, std::cout, std::cerr);
    });
  }
  return kInternal;
}
