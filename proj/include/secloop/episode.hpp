#pragma once

// One pass through the loop for a single output: alerts -> summaries ->
// prompt -> generated tokens -> strategy text -> battlefield -> rewards.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "secloop/battlefield.hpp"
#include "secloop/policy.hpp"
#include "secloop/rewards.hpp"
#include "secloop/scenario.hpp"
#include "secloop/summarizer.hpp"

namespace secloop {

struct Observation {
  AlertStream alerts;
  Prompt prompt;
};

inline Observation observe(const Scenario& scenario, std::uint64_t alert_seed,
                           std::size_t buckets) {
  Observation o;
  o.alerts = emit_alerts(scenario, alert_seed);
  o.prompt = build_prompt(summarize(o.alerts), scenario.inventory, scenario.environment, buckets);
  return o;
}

/// A generated output after the format gate: the text, and the strategy if
/// (and only if) the text passed.
struct GatedOutput {
  std::string text;
  Rational r_format{0};
  std::optional<SecurityStrategy> strategy;
};

inline GatedOutput gate(std::span<const std::size_t> tokens, const Vocabulary& vocab,
                        const Scenario& scenario) {
  GatedOutput g;
  g.text = decode(tokens, vocab, scenario.inventory);
  g.r_format = format_reward(g.text);
  if (g.r_format == Rational(1)) g.strategy = std::get<SecurityStrategy>(parse_strategy(g.text));
  return g;
}

struct EpisodeTrace {
  std::string scenario;
  Observation observation;
  Trajectory trajectory;
  GatedOutput output;
  std::optional<FeedbackReport> report;
  JudgeVerdict verdict;
  RewardBreakdown reward;
  bool correct = false;
};

inline JudgeContext judge_context(const Observation& o, const Scenario& scenario) {
  return JudgeContext{&o.prompt.summaries, &scenario.inventory, o.prompt.rendered};
}

/// Scores an output that has already been through the battlefield (or was
/// gated out before it).
inline void score(EpisodeTrace& e, const Scenario& scenario, const StrategyJudge& judge) {
  const JudgeContext ctx = judge_context(e.observation, scenario);
  e.reward = total_reward(e.output.text, e.report, judge, ctx);
  ParsedOutput parsed = e.output.strategy ? ParsedOutput{*e.output.strategy}
                                          : ParsedOutput{FormatError{0, "format check failed"}};
  e.verdict = penalty(parsed, judge, ctx);
  e.correct = e.report.has_value() && is_correct(*e.report);
}

struct EpisodeSeeds {
  std::uint64_t alerts;
  std::uint64_t sampling;
  std::uint64_t battlefield;
};

inline EpisodeSeeds episode_seeds(std::uint64_t seed, std::uint64_t episode) {
  return {stable_hash(seed, episode, 0xA1), stable_hash(seed, episode, 0x5A),
          stable_hash(seed, episode, 0xBF)};
}

/// Full episode with greedy decoding, or sampling at `temperature` when
/// `sampled` is set.
inline EpisodeTrace run_policy_episode(const PolicyWeights& w, const Scenario& scenario,
                                       const EpisodeSeeds& seeds, const StrategyJudge& judge,
                                       std::size_t max_len, bool sampled = false,
                                       double temperature = 1.0,
                                       BattlefieldProbe* probe = nullptr) {
  EpisodeTrace e;
  e.scenario = scenario.name;
  e.observation = observe(scenario, seeds.alerts, w.buckets);
  const std::size_t bucket = e.observation.prompt.context_hash;
  e.trajectory = sampled ? sample(w, bucket, max_len, temperature, seeds.sampling)
                         : greedy(w, bucket, max_len);
  e.output = gate(e.trajectory.tokens, w.vocabulary, scenario);
  if (e.output.strategy) {
    e.report = run_episode(scenario, *e.output.strategy, seeds.battlefield, probe);
  }
  score(e, scenario, judge);
  return e;
}

}  // namespace secloop
