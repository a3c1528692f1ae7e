#pragma once

// Four-stage reward: format -> execution -> evaluation -> penalty.
//
// Outputs that fail the format check skip execution and evaluation (no
// battlefield instance is created for them) and go straight to the penalty
// stage.

#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "secloop/core.hpp"
#include "secloop/strategy_text.hpp"

namespace secloop {

using ParsedOutput = std::variant<SecurityStrategy, FormatError>;

inline Rational format_reward(std::string_view raw_text) {
  if (!std::holds_alternative<SecurityStrategy>(parse_strategy(raw_text))) return Rational(0);
  const bool re_ok = std::regex_match(raw_text.begin(), raw_text.end(), canonical_strategy_regex());
  return Rational(re_ok ? 1 : 0);
}

/// All-or-nothing: every tool call must have executed.
inline Rational execution_reward(const FeedbackReport& report) {
  return Rational(report.rs_exe == Rational(1) ? 1 : 0);
}

/// Full score only when no attack stage succeeded and the service stayed up;
/// linear in the blocked fraction otherwise.
inline Rational evaluation_reward(const FeedbackReport& report) {
  return (Rational(1) - report.rs_attack) * report.rs_service;
}

// ---------------------------------------------------------------------------
// Judges

struct JudgeVerdict {
  Rational rationality{1};
  std::vector<std::string> reasons;  // fired rule identifiers
};

/// What a judge may look at besides the output itself.
struct JudgeContext {
  const std::vector<AlertSummary>* summaries = nullptr;
  const std::vector<ToolSpec>* inventory = nullptr;
  std::string_view prompt_text;
};

class StrategyJudge {
 public:
  virtual ~StrategyJudge() = default;
  virtual JudgeVerdict judge(const ParsedOutput& output, const JudgeContext& ctx) const = 0;
};

/// Deterministic rule judge. Each fired rule costs a quarter of rationality:
///   R1 a parameter value the tool spec marks as over-broad
///   R2 a disruptive invocation of a tool none of whose mitigation targets
///      matches an observed attack type
///   R3 more than max_calls calls
///   R4 unparseable output
class RuleJudge final : public StrategyJudge {
 public:
  static constexpr std::int64_t kQuantumDen = 4;

  explicit RuleJudge(std::size_t max_calls = 8) : max_calls_(max_calls) {}

  JudgeVerdict judge(const ParsedOutput& output, const JudgeContext& ctx) const override {
    JudgeVerdict v;
    if (std::holds_alternative<FormatError>(output)) {
      v.reasons.push_back("R4");
    } else {
      const auto& strategy = std::get<SecurityStrategy>(output);
      if (fires_broad(strategy, ctx)) v.reasons.push_back("R1");
      if (fires_unjustified_disruption(strategy, ctx)) v.reasons.push_back("R2");
      if (strategy.calls.size() > max_calls_) v.reasons.push_back("R3");
    }
    const auto fired = static_cast<std::int64_t>(v.reasons.size());
    v.rationality = std::max(Rational(0), Rational(1) - Rational(fired, kQuantumDen));
    return v;
  }

  std::size_t max_calls() const { return max_calls_; }

 private:
  static bool fires_broad(const SecurityStrategy& s, const JudgeContext& ctx) {
    if (ctx.inventory == nullptr) return false;
    for (const ToolCall& call : s.calls) {
      const ToolSpec* spec = find_tool(*ctx.inventory, call.tool_name);
      if (spec == nullptr) continue;
      for (const auto& [name, value] : call.params) {
        for (const ParamSpec& p : spec->params) {
          if (p.name == name && p.broad.contains(value)) return true;
        }
      }
    }
    return false;
  }

  static bool fires_unjustified_disruption(const SecurityStrategy& s, const JudgeContext& ctx) {
    if (ctx.inventory == nullptr) return false;
    for (const ToolCall& call : s.calls) {
      const ToolSpec* spec = find_tool(*ctx.inventory, call.tool_name);
      if (spec == nullptr || !is_disruptive(call, *spec)) continue;
      bool justified = false;
      if (ctx.summaries != nullptr) {
        for (const AlertSummary& a : *ctx.summaries) {
          for (const MitigationTarget& t : spec->blocks) justified |= t.attack_type == a.attack_type;
        }
      }
      if (!justified) return true;
    }
    return false;
  }

  std::size_t max_calls_;
};

inline JudgeVerdict penalty(const ParsedOutput& output, const StrategyJudge& judge,
                            const JudgeContext& ctx) {
  JudgeVerdict v = judge.judge(output, ctx);
  if (v.rationality < Rational(0) || v.rationality > Rational(1)) {
    throw std::logic_error("judge returned rationality outside [0,1]");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Unit-weight sum minus penalty, with format gating. A report must be given
/// exactly when the text passed the format check.
inline RewardBreakdown total_reward(std::string_view raw_text,
                                    const std::optional<FeedbackReport>& report,
                                    const StrategyJudge& judge, const JudgeContext& ctx) {
  RewardBreakdown b;
  b.r_format = format_reward(raw_text);
  ParsedOutput parsed = parse_strategy(raw_text);
  if (b.r_format < Rational(1) && std::holds_alternative<SecurityStrategy>(parsed)) {
    parsed = FormatError{0, "text does not match the canonical expression"};
  }
  if ((b.r_format == Rational(1)) != report.has_value()) {
    throw std::logic_error("battlefield report must be present iff the format check passed");
  }
  if (b.r_format < Rational(1)) {
    b.gated = true;
  } else {
    b.r_exec = execution_reward(*report);
    b.r_eva = evaluation_reward(*report);
  }
  b.penalty = Rational(1) - penalty(parsed, judge, ctx).rationality;
  b.total = b.r_format + b.r_exec + b.r_eva - b.penalty;
  return b;
}

/// Per-module weights; all ones reproduce RewardBreakdown::total.
struct RewardWeights {
  double format = 1.0;
  double exec = 1.0;
  double eva = 1.0;
  double penalty = 1.0;
};

inline double weighted_total(const RewardBreakdown& b, const RewardWeights& w) {
  return w.format * to_double(b.r_format) + w.exec * to_double(b.r_exec) +
         w.eva * to_double(b.r_eva) - w.penalty * to_double(b.penalty);
}

}  // namespace secloop
