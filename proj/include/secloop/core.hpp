#pragma once

// Shared domain types for the security loop: alerts, tools, strategies and
// the scored outcome records. Everything here is a plain value type.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/rational.hpp>
#include <nlohmann/json.hpp>

namespace secloop {

/// Exact score arithmetic. Every score in the loop is a mean of 0/1
/// outcomes over small counts, so 64-bit numerators never overflow.
using Rational = boost::rational<std::int64_t>;

inline std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

/// Mean of 0/1 outcomes; zero for an empty list.
inline Rational mean_of(const std::vector<int>& outcomes) {
  if (outcomes.empty()) return Rational(0);
  std::int64_t hits = 0;
  for (int o : outcomes) hits += (o != 0);
  return Rational(hits, static_cast<std::int64_t>(outcomes.size()));
}

// ---------------------------------------------------------------------------
// Enumerations

enum class Severity : std::uint8_t { kLow, kMedium, kHigh, kCritical };

inline constexpr std::array<std::string_view, 4> kSeverityNames = {"low", "medium", "high",
                                                                    "critical"};

inline std::string_view to_string(Severity s) { return kSeverityNames[static_cast<int>(s)]; }

inline std::optional<Severity> parse_severity(std::string_view name) {
  for (std::size_t i = 0; i < kSeverityNames.size(); ++i) {
    if (kSeverityNames[i] == name) return static_cast<Severity>(i);
  }
  return std::nullopt;
}

/// The thirteen ATT&CK tactical stages, in kill-chain order.
enum class AttackTactic : std::uint8_t {
  kReconnaissance,
  kInitialAccess,
  kExecution,
  kPersistence,
  kPrivilegeEscalation,
  kDefenseEvasion,
  kCredentialAccess,
  kDiscovery,
  kLateralMovement,
  kCollection,
  kCommandAndControl,
  kExfiltration,
  kImpact,
};

inline constexpr std::array<std::string_view, 13> kTacticNames = {
    "Reconnaissance",   "InitialAccess",  "Execution",      "Persistence",
    "PrivilegeEscalation", "DefenseEvasion", "CredentialAccess", "Discovery",
    "LateralMovement",  "Collection",     "CommandAndControl", "Exfiltration",
    "Impact"};

inline std::string_view to_string(AttackTactic t) { return kTacticNames[static_cast<int>(t)]; }

inline std::optional<AttackTactic> parse_tactic(std::string_view name) {
  for (std::size_t i = 0; i < kTacticNames.size(); ++i) {
    if (kTacticNames[i] == name) return static_cast<AttackTactic>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Alerts

struct AttackAlert {
  std::string id;
  std::int64_t timestamp = 0;  // ms since scenario start
  std::string attack_type;
  Severity severity = Severity::kLow;
  std::string source;
  std::string target;
  std::optional<AttackTactic> stage_tag;
  std::string payload_summary;

  bool operator==(const AttackAlert&) const = default;
};

/// Throws std::invalid_argument when the alert breaks its invariants.
inline void check_alert(const AttackAlert& a) {
  if (a.timestamp < 0) throw std::invalid_argument("alert " + a.id + ": negative timestamp");
  if (a.attack_type.empty()) throw std::invalid_argument("alert " + a.id + ": empty attack_type");
  if (a.source == a.target) throw std::invalid_argument("alert " + a.id + ": source == target");
}

inline bool is_benign(std::string_view attack_type) {
  return attack_type.substr(0, 7) == "benign_";
}

struct AlertSummary {
  std::string attack_type;
  std::string source;
  std::string target;
  std::int64_t count = 1;
  std::int64_t first_seen = 0;
  std::int64_t last_seen = 0;
  Severity max_severity = Severity::kLow;
  std::set<AttackTactic> stage_tags;

  bool operator==(const AlertSummary&) const = default;
};

// ---------------------------------------------------------------------------
// Tools and strategies

using ParamBinding = std::pair<std::string, std::string>;  // (param name, value token)

struct ParamSpec {
  std::string name;
  std::vector<std::string> values;  // finite, non-empty domain
  std::set<std::string> broad;      // values the judge treats as over-broad scope

  bool operator==(const ParamSpec&) const = default;
};

/// A (tactic, attack_type) pair a tool is meant to mitigate.
struct MitigationTarget {
  AttackTactic tactic;
  std::string attack_type;

  auto operator<=>(const MitigationTarget&) const = default;
};

struct ToolSpec {
  std::string name;
  std::vector<ParamSpec> params;
  // Disjunction of conjunctions: the invocation disrupts service when every
  // binding of at least one clause holds.
  std::vector<std::vector<ParamBinding>> disruptive_when;
  std::set<MitigationTarget> blocks;
  double flaky = 0.0;  // probability an otherwise valid call fails

  bool operator==(const ToolSpec&) const = default;
};

struct ToolCall {
  std::string tool_name;
  std::vector<ParamBinding> params;

  bool operator==(const ToolCall&) const = default;
};

/// Ordered tool calls plus the exact text they were parsed from. Equality
/// compares the calls only.
struct SecurityStrategy {
  std::vector<ToolCall> calls;
  std::string raw_text;

  bool operator==(const SecurityStrategy& o) const { return calls == o.calls; }
};

struct FormatError {
  std::size_t offset = 0;
  std::string message;

  bool operator==(const FormatError&) const = default;
};

inline const ToolSpec* find_tool(const std::vector<ToolSpec>& inventory, std::string_view name) {
  auto it = std::find_if(inventory.begin(), inventory.end(),
                         [&](const ToolSpec& t) { return t.name == name; });
  return it == inventory.end() ? nullptr : &*it;
}

/// True iff the call's parameters match the tool's schema exactly (names in
/// order, values in domain).
inline bool call_matches_schema(const ToolCall& call, const ToolSpec& spec) {
  if (call.params.size() != spec.params.size()) return false;
  for (std::size_t i = 0; i < spec.params.size(); ++i) {
    const auto& [name, value] = call.params[i];
    const ParamSpec& p = spec.params[i];
    if (name != p.name) return false;
    if (std::find(p.values.begin(), p.values.end(), value) == p.values.end()) return false;
  }
  return true;
}

inline std::vector<bool> validate_against_inventory(const SecurityStrategy& strategy,
                                                    const std::vector<ToolSpec>& inventory) {
  std::vector<bool> flags;
  flags.reserve(strategy.calls.size());
  for (const ToolCall& call : strategy.calls) {
    const ToolSpec* spec = find_tool(inventory, call.tool_name);
    flags.push_back(spec != nullptr && call_matches_schema(call, *spec));
  }
  return flags;
}

inline std::optional<std::string_view> param_value(const ToolCall& call, std::string_view name) {
  for (const auto& [n, v] : call.params) {
    if (n == name) return v;
  }
  return std::nullopt;
}

inline bool is_disruptive(const ToolCall& call, const ToolSpec& spec) {
  return std::any_of(spec.disruptive_when.begin(), spec.disruptive_when.end(),
                     [&](const std::vector<ParamBinding>& clause) {
                       return std::all_of(clause.begin(), clause.end(), [&](const ParamBinding& b) {
                         return param_value(call, b.first) == b.second;
                       });
                     });
}

// ---------------------------------------------------------------------------
// Environment and outcomes

struct EnvironmentDescriptor {
  std::string name;
  std::vector<std::pair<std::string, std::string>> services;  // (service name, endpoint)
  std::vector<std::string> protected_services;
  std::string notes;

  bool operator==(const EnvironmentDescriptor&) const = default;
};

/// Execution and attack outcomes of one strategy in one battlefield instance.
/// tool_outcomes and stage_outcomes are two distinct 0/1 lists even though
/// both are "execution success" flags.
struct FeedbackReport {
  std::vector<int> tool_outcomes;
  std::vector<int> stage_outcomes;
  Rational rs_exe{0};
  Rational rs_attack{0};
  Rational rs_service{0};
  Rational feedback_sum{0};

  bool operator==(const FeedbackReport&) const = default;
};

inline FeedbackReport make_report(std::vector<int> tool_outcomes, std::vector<int> stage_outcomes,
                                  bool service_up) {
  FeedbackReport r;
  r.rs_exe = mean_of(tool_outcomes);  // 0 for the empty strategy
  r.rs_attack = mean_of(stage_outcomes);
  r.rs_service = Rational(service_up ? 1 : 0);
  r.feedback_sum = r.rs_exe + r.rs_attack + r.rs_service;
  r.tool_outcomes = std::move(tool_outcomes);
  r.stage_outcomes = std::move(stage_outcomes);
  return r;
}

struct RewardBreakdown {
  Rational r_format{0};
  Rational r_exec{0};
  Rational r_eva{0};
  Rational penalty{0};
  Rational total{0};
  bool gated = false;

  bool operator==(const RewardBreakdown&) const = default;
};

// ---------------------------------------------------------------------------
// Single-line records for the metrics log. Rationals are written as exact
// "n/d" strings.

inline nlohmann::ordered_json to_record(const FeedbackReport& r) {
  return {{"tool_outcomes", r.tool_outcomes}, {"stage_outcomes", r.stage_outcomes},
          {"rs_exe", to_string(r.rs_exe)},    {"rs_attack", to_string(r.rs_attack)},
          {"rs_service", to_string(r.rs_service)}, {"feedback_sum", to_string(r.feedback_sum)}};
}

inline nlohmann::ordered_json to_record(const RewardBreakdown& r) {
  return {{"r_format", to_string(r.r_format)}, {"r_exec", to_string(r.r_exec)},
          {"r_eva", to_string(r.r_eva)},       {"penalty", to_string(r.penalty)},
          {"total", to_string(r.total)},       {"gated", r.gated}};
}

/// Inverse of to_string(Rational); throws std::invalid_argument.
inline Rational parse_rational(std::string_view text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string_view::npos) return Rational(std::stoll(std::string(text)));
    return Rational(std::stoll(std::string(text.substr(0, slash))),
                    std::stoll(std::string(text.substr(slash + 1))));
  } catch (const std::exception&) {
    throw std::invalid_argument("not a rational: " + std::string(text));
  }
}

}  // namespace secloop
