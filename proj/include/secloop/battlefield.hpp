#pragma once

// Simulated red/blue evaluation. One EnvInstance per strategy: the blue side
// installs mitigations first, then the red side replays the attack chain, and
// the validator turns both into a FeedbackReport.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "secloop/core.hpp"
#include "secloop/hash.hpp"
#include "secloop/rng.hpp"
#include "secloop/scenario.hpp"

namespace secloop {

/// Shared counters for observing dispatch from tests and tools.
struct BattlefieldProbe {
  std::atomic<std::int64_t> instances_created{0};
  std::atomic<std::int64_t> active{0};
  std::atomic<std::int64_t> high_water{0};
};

class EnvInstance {
 public:
  EnvInstance(const Scenario& scenario, std::uint64_t seed, BattlefieldProbe* probe = nullptr)
      : scenario_(&scenario), seed_(seed), probe_(probe) {
    if (probe_ != nullptr) {
      probe_->instances_created.fetch_add(1);
      const auto now = probe_->active.fetch_add(1) + 1;
      auto hw = probe_->high_water.load();
      while (now > hw && !probe_->high_water.compare_exchange_weak(hw, now)) {
      }
    }
  }
  ~EnvInstance() {
    if (probe_ != nullptr) probe_->active.fetch_sub(1);
  }
  EnvInstance(const EnvInstance&) = delete;
  EnvInstance& operator=(const EnvInstance&) = delete;

  /// Installs the strategy's mitigations. A call succeeds iff it matches the
  /// inventory schema (and survives the tool's flakiness draw, if any).
  std::vector<int> apply_blue(const SecurityStrategy& strategy) {
    if (blue_applied_) throw std::logic_error("EnvInstance is single-use: blue already applied");
    blue_applied_ = true;
    Rng rng(stable_hash(seed_, 0xB1ULL));
    const auto valid = validate_against_inventory(strategy, scenario_->inventory);
    tool_outcomes_.clear();
    for (std::size_t j = 0; j < strategy.calls.size(); ++j) {
      bool ok = valid[j];
      if (ok) {
        const ToolSpec* spec = find_tool(scenario_->inventory, strategy.calls[j].tool_name);
        if (spec->flaky > 0.0 && rng.uniform() < spec->flaky) ok = false;
        if (ok) {
          blue_state_.push_back(strategy.calls[j]);
          if (is_disruptive(strategy.calls[j], *spec)) service_up_ = false;
        }
      }
      tool_outcomes_.push_back(ok ? 1 : 0);
    }
    return tool_outcomes_;
  }

  /// Replays the chain. A stage succeeds iff nothing installed matches its
  /// blocked_by patterns and every earlier stage succeeded.
  std::vector<int> run_red() {
    if (!blue_applied_) throw std::logic_error("run_red before apply_blue");
    if (red_run_) throw std::logic_error("EnvInstance is single-use: red already ran");
    red_run_ = true;
    bool chain_intact = true;
    red_state_.clear();
    for (const AttackStage& stage : scenario_->chain) {
      const bool blocked = std::any_of(
          stage.blocked_by.begin(), stage.blocked_by.end(), [&](const MitigationPattern& p) {
            return std::any_of(blue_state_.begin(), blue_state_.end(),
                               [&](const ToolCall& c) { return p.matches(c); });
          });
      chain_intact = chain_intact && !blocked;
      red_state_.push_back(chain_intact ? 1 : 0);
      if (chain_intact && stage.tactic == AttackTactic::kImpact) service_up_ = false;
    }
    return red_state_;
  }

  FeedbackReport evaluate() const {
    if (!red_run_) throw std::logic_error("evaluate before run_red");
    return make_report(tool_outcomes_, red_state_, service_up_);
  }

  const std::vector<ToolCall>& blue_state() const { return blue_state_; }
  const std::vector<int>& red_state() const { return red_state_; }
  bool service_up() const { return service_up_; }
  std::uint64_t seed() const { return seed_; }

 private:
  const Scenario* scenario_;
  std::uint64_t seed_;
  BattlefieldProbe* probe_;
  std::vector<ToolCall> blue_state_;
  std::vector<int> tool_outcomes_;
  std::vector<int> red_state_;
  bool service_up_ = true;
  bool blue_applied_ = false;
  bool red_run_ = false;
};

/// Runs one strategy end to end in a fresh instance.
inline FeedbackReport run_episode(const Scenario& scenario, const SecurityStrategy& strategy,
                                  std::uint64_t seed, BattlefieldProbe* probe = nullptr) {
  EnvInstance instance(scenario, seed, probe);
  instance.apply_blue(strategy);
  instance.run_red();
  return instance.evaluate();
}

inline bool is_correct(const FeedbackReport& r) {
  return r.rs_exe == Rational(1) && r.rs_attack == Rational(0) && r.rs_service == Rational(1);
}

// ---------------------------------------------------------------------------
// Parallel dispatch

struct DispatchStats {
  std::size_t group_size = 0;
  std::size_t parallelism = 0;
  std::size_t waves = 0;
  double wall_ms = 0.0;
};

inline std::size_t wave_count(std::size_t group_size, std::size_t parallelism) {
  return (group_size + parallelism - 1) / parallelism;
}

/// Evaluates slot i in instance seed stable_hash(run_seed, i), N_env slots
/// per wave. Empty slots (outputs that failed the format gate) occupy their
/// position in the wave but never create an instance.
inline std::pair<std::vector<std::optional<FeedbackReport>>, DispatchStats> run_group_gated(
    const Scenario& scenario, std::span<const std::optional<SecurityStrategy>> strategies,
    std::size_t n_env, std::uint64_t run_seed, BattlefieldProbe* probe = nullptr) {
  if (n_env == 0) throw std::invalid_argument("N_env must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t g = strategies.size();
  std::vector<std::optional<FeedbackReport>> reports(g);
  auto run_slot = [&](std::size_t i) {
    if (!strategies[i]) return;
    reports[i] = run_episode(scenario, *strategies[i], stable_hash(run_seed, i), probe);
  };

  DispatchStats stats{g, n_env, wave_count(g, n_env), 0.0};
  for (std::size_t w = 0; w < stats.waves; ++w) {
    const std::size_t lo = w * n_env;
    const std::size_t hi = std::min(g, lo + n_env);
    if (hi - lo == 1) {
      run_slot(lo);
      continue;
    }
    std::vector<std::jthread> workers;
    workers.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) workers.emplace_back(run_slot, i);
  }
  stats.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return {std::move(reports), stats};
}

inline std::pair<std::vector<FeedbackReport>, DispatchStats> run_group(
    const Scenario& scenario, std::span<const SecurityStrategy> strategies, std::size_t n_env,
    std::uint64_t run_seed, BattlefieldProbe* probe = nullptr) {
  if (strategies.empty()) throw std::invalid_argument("group must hold at least one strategy");
  std::vector<std::optional<SecurityStrategy>> slots(strategies.begin(), strategies.end());
  auto [gated, stats] = run_group_gated(scenario, slots, n_env, run_seed, probe);
  std::vector<FeedbackReport> reports;
  reports.reserve(gated.size());
  for (auto& r : gated) reports.push_back(std::move(*r));
  return {std::move(reports), stats};
}

// ---------------------------------------------------------------------------
// Solvability

/// Every schema-valid call the inventory admits, tool by tool, values in
/// domain order.
inline std::vector<ToolCall> enumerate_valid_calls(const std::vector<ToolSpec>& inventory) {
  std::vector<ToolCall> out;
  for (const ToolSpec& tool : inventory) {
    std::vector<std::size_t> idx(tool.params.size(), 0);
    for (;;) {
      ToolCall call{tool.name, {}};
      for (std::size_t p = 0; p < tool.params.size(); ++p) {
        call.params.emplace_back(tool.params[p].name, tool.params[p].values[idx[p]]);
      }
      out.push_back(std::move(call));
      std::size_t p = 0;
      for (; p < idx.size(); ++p) {
        if (++idx[p] < tool.params[p].values.size()) break;
        idx[p] = 0;
      }
      if (p == idx.size()) break;
    }
  }
  return out;
}

/// Brute-force search for a strategy of at most max_len valid calls that
/// blocks the whole chain without taking the service down. Flakiness is
/// ignored: solvability is a property of the scenario, not of luck.
inline std::optional<SecurityStrategy> find_blocking_strategy(const Scenario& scenario,
                                                              std::size_t max_len = 2) {
  Scenario steady = scenario;
  for (ToolSpec& t : steady.inventory) t.flaky = 0.0;
  const auto calls = enumerate_valid_calls(steady.inventory);
  std::vector<std::size_t> pick;
  std::optional<SecurityStrategy> found;
  auto search = [&](auto&& self, std::size_t depth) -> bool {
    if (depth > 0) {
      SecurityStrategy s;
      for (std::size_t i : pick) s.calls.push_back(calls[i]);
      const FeedbackReport r = run_episode(steady, s, 0);
      if (r.rs_attack == Rational(0) && r.rs_service == Rational(1)) {
        found = std::move(s);
        return true;
      }
    }
    if (depth == max_len) return false;
    for (std::size_t i = 0; i < calls.size(); ++i) {
      pick.push_back(i);
      if (self(self, depth + 1)) return true;
      pick.pop_back();
    }
    return false;
  };
  search(search, 0);
  return found;
}

/// Schema-validates a scenario document and, when it is flagged
/// verify_solvable, proves a blocking strategy exists.
inline Scenario load_scenario_text(std::string_view text) {
  Scenario s = parse_scenario(text);
  if (s.verify_solvable && !find_blocking_strategy(s)) {
    throw SchemaError("chain", "unsolvable: no strategy of <= 2 valid calls blocks every stage "
                               "while keeping protected services up");
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw SchemaError("$", e.what());
  }
  return load_scenario_text(text);
}

}  // namespace secloop
