#pragma once

// Group-relative policy optimization with the security-aware changes:
// advantages are mean-subtracted only (no std normalisation), there is no KL
// term in the loss, and the ratio clip is asymmetric (Clip-Higher).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "secloop/battlefield.hpp"
#include "secloop/episode.hpp"
#include "secloop/policy.hpp"
#include "secloop/rewards.hpp"
#include "secloop/scenario.hpp"

namespace secloop {

struct TrainConfig {
  std::size_t group_size = 7;  // G
  double eps_low = 0.2;
  double eps_high = 0.28;
  std::size_t inner_iterations = 1;  // mu
  std::size_t steps = 200;           // M
  std::size_t prompts_per_step = 4;  // B
  double learning_rate = 0.05;
  std::size_t n_env = 4;
  std::size_t max_len = kDefaultMaxLen;
  double temperature = 1.0;
  RewardWeights reward_weights;
  std::size_t ref_sync_steps = 512;
  double alpha = 0.6;
  double beta = 0.0;
  std::uint64_t run_seed = 0;
  std::size_t buckets = kDefaultPromptBuckets;  // H
  std::size_t order = kDefaultMarkovOrder;      // k
  std::size_t max_calls = 8;

  void validate() const {
    if (group_size < 2) throw std::invalid_argument("G must be >= 2");
    if (!(eps_low > 0.0)) throw std::invalid_argument("eps_low must be > 0");
    if (eps_high < eps_low) throw std::invalid_argument("eps_high must be >= eps_low");
    if (inner_iterations < 1) throw std::invalid_argument("mu must be >= 1");
    if (prompts_per_step < 1) throw std::invalid_argument("B must be >= 1");
    if (n_env < 1) throw std::invalid_argument("N_env must be >= 1");
    if (max_len < 2) throw std::invalid_argument("max_len must be >= 2");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
    if (ref_sync_steps < 1) throw std::invalid_argument("ref_sync_steps must be >= 1");
    if (buckets < 1) throw std::invalid_argument("H must be >= 1");
  }
};

struct GroupBatch {
  const Scenario* scenario = nullptr;
  Observation observation;
  std::vector<Trajectory> trajectories;
  std::vector<EpisodeTrace> episodes;  // per output: text, report, breakdown
  std::vector<double> rewards;
  std::vector<double> advantages;
  DispatchStats dispatch;
};

/// Reward minus group mean. No division by the standard deviation.
inline std::vector<double> compute_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("group needs at least two rewards");
  // (G*r_i - sum) / G in extended precision: a common shift cancels inside
  // the numerator before the single rounding step.
  long double sum = 0.0L;
  for (double r : rewards) sum += r;
  const long double g = static_cast<long double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = static_cast<double>((g * rewards[i] - sum) / g);
  }
  return adv;
}

inline double importance_ratio(const PolicyWeights& theta, const PolicyWeights& theta_old,
                               std::size_t bucket, std::span<const std::size_t> tokens,
                               std::size_t t) {
  if (t >= tokens.size()) throw std::out_of_range("token position outside trajectory");
  const auto ctx = theta.context_at(bucket, tokens, t);
  const double lp = floored_log(softmax(theta.row(ctx))[tokens[t]]);
  const double lp_old = floored_log(softmax(theta_old.row(ctx))[tokens[t]]);
  return std::exp(lp - lp_old);
}

/// min(r*A, clip(r, 1-eps_low, 1+eps_high)*A), and whether the clipped branch
/// is the one taken (ties take the unclipped branch).
struct ClippedTerm {
  double value;
  bool clipped;
};

inline ClippedTerm clipped_term(double ratio, double advantage, double eps_low, double eps_high) {
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high) * advantage;
  if (unclipped <= clipped) return {unclipped, false};
  return {clipped, true};
}

struct ObjectiveEval {
  double value = 0.0;
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;
};

namespace detail {

// Visits every (group, output, token) with its ratio and advantage.
template <typename Visit>
void for_each_token(const PolicyWeights& theta, const PolicyWeights& theta_old,
                    std::span<const GroupBatch> batch, Visit&& visit) {
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const GroupBatch& g = batch[b];
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      const Trajectory& tr = g.trajectories[i];
      for (std::size_t t = 0; t < tr.tokens.size(); ++t) {
        const auto ctx = theta.context_at(tr.bucket, tr.tokens, t);
        const double lp = floored_log(softmax(theta.row(ctx))[tr.tokens[t]]);
        const double lp_old = floored_log(softmax(theta_old.row(ctx))[tr.tokens[t]]);
        visit(b, i, ctx, tr.tokens[t], std::exp(lp - lp_old), g.advantages[i]);
      }
    }
  }
}

}  // namespace detail

/// Per group (1/G) * sum_i sum_t min(...); averaged over the groups in the
/// batch. Tokens are summed, not length-normalised.
inline ObjectiveEval evaluate_objective(const PolicyWeights& theta, const PolicyWeights& theta_old,
                                        std::span<const GroupBatch> batch,
                                        const TrainConfig& config) {
  ObjectiveEval out;
  if (batch.empty()) return out;
  detail::for_each_token(theta, theta_old, batch,
                         [&](std::size_t b, std::size_t, std::size_t, std::size_t, double ratio,
                             double adv) {
                           const auto term =
                               clipped_term(ratio, adv, config.eps_low, config.eps_high);
                           const double g = static_cast<double>(batch[b].trajectories.size());
                           out.value += term.value / g;
                           ++out.tokens;
                           out.clipped_tokens += term.clipped;
                         });
  out.value /= static_cast<double>(batch.size());
  return out;
}

inline double surrogate_objective(const PolicyWeights& theta, const PolicyWeights& theta_old,
                                  std::span<const GroupBatch> batch, const TrainConfig& config) {
  return evaluate_objective(theta, theta_old, batch, config).value;
}

/// Exact gradient of surrogate_objective with respect to theta's logits.
/// Tokens on the clipped branch contribute nothing.
inline SparseGrad objective_gradient(const PolicyWeights& theta, const PolicyWeights& theta_old,
                                     std::span<const GroupBatch> batch,
                                     const TrainConfig& config) {
  SparseGrad grad;
  if (batch.empty()) return grad;
  const double per_batch = 1.0 / static_cast<double>(batch.size());
  detail::for_each_token(
      theta, theta_old, batch,
      [&](std::size_t b, std::size_t, std::size_t ctx, std::size_t token, double ratio,
          double adv) {
        if (clipped_term(ratio, adv, config.eps_low, config.eps_high).clipped) return;
        if (adv == 0.0) return;
        const double g = static_cast<double>(batch[b].trajectories.size());
        accumulate_token_grad(theta, ctx, token, per_batch * ratio * adv / g, grad);
      });
  return grad;
}

// ---------------------------------------------------------------------------
// Training loop

struct StepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double accuracy = 0.0;     // fraction of sampled outputs that are correct
  double objective = 0.0;    // surrogate after the update
  double grad_norm = 0.0;    // norm of the first inner-iteration gradient
  double clip_fraction = 0.0;  // fraction of tokens on the clipped branch after the update
  std::size_t waves = 0;     // per group
  std::size_t trajectories = 0;
  double wall_ms = 0.0;
};

struct TrainerState {
  PolicyWeights theta;
  std::vector<double> theta_ref;  // reference snapshot; loss-inert while beta == 0
  std::size_t step = 0;           // completed steps

  explicit TrainerState(PolicyWeights w) : theta(std::move(w)), theta_ref(theta.logits) {}
};

inline Vocabulary vocabulary_for(std::span<const Scenario> scenarios) {
  std::vector<const std::vector<ToolSpec>*> inventories;
  for (const Scenario& s : scenarios) inventories.push_back(&s.inventory);
  return Vocabulary::from_inventories(inventories);
}

/// Samples and scores the B groups of one step under theta_old.
inline std::vector<GroupBatch> collect_groups(const PolicyWeights& theta_old,
                                              std::span<const Scenario> scenarios,
                                              std::size_t step, const TrainConfig& config,
                                              const StrategyJudge& judge,
                                              BattlefieldProbe* probe = nullptr) {
  std::vector<GroupBatch> groups;
  groups.reserve(config.prompts_per_step);
  for (std::size_t b = 0; b < config.prompts_per_step; ++b) {
    GroupBatch g;
    g.scenario = &scenarios[(step * config.prompts_per_step + b) % scenarios.size()];
    g.observation = observe(*g.scenario, stable_hash(config.run_seed, step, b), theta_old.buckets);
    const std::size_t bucket = g.observation.prompt.context_hash;

    std::vector<std::optional<SecurityStrategy>> slots;
    for (std::size_t i = 0; i < config.group_size; ++i) {
      g.trajectories.push_back(sample(theta_old, bucket, config.max_len, config.temperature,
                                      stable_hash(config.run_seed, step, b, i)));
      EpisodeTrace e;
      e.scenario = g.scenario->name;
      e.output = gate(g.trajectories.back().tokens, theta_old.vocabulary, *g.scenario);
      slots.push_back(e.output.strategy);
      g.episodes.push_back(std::move(e));
    }
    auto [reports, stats] = run_group_gated(*g.scenario, slots, config.n_env,
                                            stable_hash(config.run_seed, step, b, 0xBA77), probe);
    g.dispatch = stats;
    for (std::size_t i = 0; i < config.group_size; ++i) {
      EpisodeTrace& e = g.episodes[i];
      e.observation = g.observation;
      e.trajectory = g.trajectories[i];
      e.report = std::move(reports[i]);
      score(e, *g.scenario, judge);
      g.rewards.push_back(weighted_total(e.reward, config.reward_weights));
    }
    g.advantages = compute_advantages(g.rewards);
    groups.push_back(std::move(g));
  }
  return groups;
}

inline StepMetrics train_step(TrainerState& state, std::span<const Scenario> scenarios,
                              const TrainConfig& config, const StrategyJudge& judge,
                              BattlefieldProbe* probe = nullptr) {
  if (scenarios.empty()) throw std::invalid_argument("no scenarios to train on");
  const auto start = std::chrono::steady_clock::now();
  const PolicyWeights theta_old = state.theta;
  const std::vector<GroupBatch> groups =
      collect_groups(theta_old, scenarios, state.step, config, judge, probe);

  StepMetrics m;
  m.step = state.step + 1;
  std::size_t correct = 0;
  for (const GroupBatch& g : groups) {
    for (std::size_t i = 0; i < g.rewards.size(); ++i) {
      m.mean_reward += g.rewards[i];
      correct += g.episodes[i].correct;
      ++m.trajectories;
    }
  }
  m.mean_reward /= static_cast<double>(m.trajectories);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.trajectories);
  m.waves = groups.front().dispatch.waves;

  for (std::size_t it = 0; it < config.inner_iterations; ++it) {
    const SparseGrad grad = objective_gradient(state.theta, theta_old, groups, config);
    if (it == 0) m.grad_norm = l2_norm(grad);
    if (!grad.empty()) apply_gradient(state.theta, grad, config.learning_rate);
  }
  const ObjectiveEval after = evaluate_objective(state.theta, theta_old, groups, config);
  m.objective = after.value;
  m.clip_fraction =
      after.tokens == 0 ? 0.0 : static_cast<double>(after.clipped_tokens) / after.tokens;

  ++state.step;
  if (state.step % config.ref_sync_steps == 0) {
    for (std::size_t i = 0; i < state.theta_ref.size(); ++i) {
      state.theta_ref[i] = config.alpha * state.theta.logits[i] +
                           (1.0 - config.alpha) * state.theta_ref[i];
    }
  }
  m.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return m;
}

struct TrainResult {
  PolicyWeights weights;
  std::vector<StepMetrics> metrics;
};

using StepCallback = std::function<void(const TrainerState&, const StepMetrics&)>;

/// Runs config.steps steps from uniform logits over the scenarios' joint
/// vocabulary. `on_step` sees the state after every step.
inline TrainResult train(const TrainConfig& config, std::span<const Scenario> scenarios,
                         const StrategyJudge& judge, const StepCallback& on_step = {},
                         BattlefieldProbe* probe = nullptr) {
  config.validate();
  if (scenarios.empty()) throw std::invalid_argument("scenario set is empty");
  TrainerState state(PolicyWeights(vocabulary_for(scenarios), config.buckets, config.order));
  TrainResult result;
  for (std::size_t s = 0; s < config.steps; ++s) {
    StepMetrics m = train_step(state, scenarios, config, judge, probe);
    if (on_step) on_step(state, m);
    result.metrics.push_back(m);
  }
  result.weights = std::move(state.theta);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalSummary {
  std::size_t episodes = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double mean_reward = 0.0;
  double mean_rs_exe = 0.0;
  double mean_rs_attack = 0.0;
  double mean_rs_service = 0.0;
};

/// Greedy (or sampled) episodes on one scenario. Malformed outputs count as
/// incorrect and contribute zero to the battlefield means.
inline EvalSummary evaluate_policy(const PolicyWeights& w, const Scenario& scenario,
                                   std::size_t episodes, std::uint64_t seed,
                                   const StrategyJudge& judge, std::size_t max_len,
                                   bool sampled = false, double temperature = 1.0,
                                   std::vector<EpisodeTrace>* traces = nullptr) {
  EvalSummary s;
  for (std::size_t e = 0; e < episodes; ++e) {
    EpisodeTrace t = run_policy_episode(w, scenario, episode_seeds(seed, e), judge, max_len,
                                        sampled, temperature);
    ++s.episodes;
    s.correct += t.correct;
    s.mean_reward += to_double(t.reward.total);
    if (t.report) {
      s.mean_rs_exe += to_double(t.report->rs_exe);
      s.mean_rs_attack += to_double(t.report->rs_attack);
      s.mean_rs_service += to_double(t.report->rs_service);
    }
    if (traces != nullptr) traces->push_back(std::move(t));
  }
  if (s.episodes > 0) {
    const double n = static_cast<double>(s.episodes);
    s.accuracy = static_cast<double>(s.correct) / n;
    s.mean_reward /= n;
    s.mean_rs_exe /= n;
    s.mean_rs_attack /= n;
    s.mean_rs_service /= n;
  }
  return s;
}

}  // namespace secloop
