#pragma once

// Replayable attack scenarios and the IDS alert emulator.
//
// A scenario file is one JSON document:
//
//   {
//     "name": "...", "seed_salt": 1, "verify_solvable": true,
//     "environment": {"name", "services": [{"name", "endpoint"}],
//                     "protected_services": [...], "notes"},
//     "tools": [{"name", "params": [{"name", "values": [...], "broad": [...]}],
//                "disruptive_when": [{"param": "value", ...}, ...],
//                "blocks": [{"tactic", "attack_type"}], "flaky": 0.0}],
//     "chain": [{"index", "attack_type", "tactic"?,
//                "alerts": [{"source", "target", "severity", "payload"}],
//                "blocked_by": [{"tool", "params": {"param": "value"}}]}],
//     "noise": {"duplication": 1, "benign_rate": 0}
//   }
//
// "tactic" may be omitted for attack types in the ATT&CK mapping table and
// must be given for unmapped (zero-day) types.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secloop/core.hpp"
#include "secloop/hash.hpp"
#include "secloop/rng.hpp"
#include "secloop/strategy_text.hpp"

namespace secloop {

class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class UnknownAttackType : public std::runtime_error {
 public:
  explicit UnknownAttackType(const std::string& type)
      : std::runtime_error("unknown attack type: " + type) {}
};

// ---------------------------------------------------------------------------
// ATT&CK mapping

using TacticTable = std::map<std::string, AttackTactic, std::less<>>;

/// Attack means per tactical stage as exercised in the red-team engine.
/// cve_2024_23897 is listed under both Execution and Discovery upstream; it
/// maps to its first listing here.
inline const TacticTable& attack_tactic_table() {
  static const TacticTable table = {
      {"port_scan", AttackTactic::kReconnaissance},
      {"redis_unauth_webshell", AttackTactic::kInitialAccess},
      {"cve_2025_29927", AttackTactic::kInitialAccess},
      {"file_upload_webshell", AttackTactic::kExecution},
      {"deserialization", AttackTactic::kExecution},
      {"cve_2024_23897", AttackTactic::kExecution},
      {"cve_2025_24813", AttackTactic::kExecution},
      {"webshell_persistence", AttackTactic::kPersistence},
      {"cve_2024_2961", AttackTactic::kPersistence},
      {"xss", AttackTactic::kCredentialAccess},
      {"csrf", AttackTactic::kCredentialAccess},
      {"sql_injection", AttackTactic::kDiscovery},
      {"lfi", AttackTactic::kDiscovery},
      {"rfi", AttackTactic::kDiscovery},
      {"ssrf", AttackTactic::kDiscovery},
      {"cve_2025_30208", AttackTactic::kDiscovery},
      {"smb_bruteforce", AttackTactic::kLateralMovement},
      {"c2_collection", AttackTactic::kCollection},
      {"c2_activation", AttackTactic::kCommandAndControl},
      {"c2_exfiltration", AttackTactic::kExfiltration},
      {"dns_hijacking", AttackTactic::kImpact},
      {"mitm", AttackTactic::kImpact},
      {"dos", AttackTactic::kImpact},
      {"ddos", AttackTactic::kImpact},
  };
  return table;
}

inline AttackTactic tactic_of(std::string_view attack_type,
                              const TacticTable& table = attack_tactic_table()) {
  auto it = table.find(attack_type);
  if (it == table.end()) throw UnknownAttackType(std::string(attack_type));
  return it->second;
}

// ---------------------------------------------------------------------------
// Scenario types

/// Tool name plus required parameter values; unlisted params are wildcards.
struct MitigationPattern {
  std::string tool;
  std::vector<ParamBinding> constraints;

  bool matches(const ToolCall& call) const {
    if (call.tool_name != tool) return false;
    return std::all_of(constraints.begin(), constraints.end(), [&](const ParamBinding& b) {
      return param_value(call, b.first) == b.second;
    });
  }

  bool operator==(const MitigationPattern&) const = default;
};

struct AlertTemplate {
  std::string source;
  std::string target;
  Severity severity = Severity::kMedium;
  std::string payload;

  bool operator==(const AlertTemplate&) const = default;
};

struct AttackStage {
  std::size_t index = 0;
  AttackTactic tactic = AttackTactic::kReconnaissance;
  std::string attack_type;
  bool zero_day = false;  // attack_type absent from the mapping table
  std::vector<AlertTemplate> alert_templates;
  std::vector<MitigationPattern> blocked_by;

  bool operator==(const AttackStage&) const = default;
};

struct NoiseSpec {
  std::int64_t duplication = 1;  // d >= 1
  std::int64_t benign_rate = 0;  // b >= 0, benign alerts per stage window

  bool operator==(const NoiseSpec&) const = default;
};

struct Scenario {
  std::string name;
  EnvironmentDescriptor environment;
  std::vector<ToolSpec> inventory;
  std::vector<AttackStage> chain;
  NoiseSpec noise;
  std::uint64_t seed_salt = 0;
  bool verify_solvable = false;

  bool operator==(const Scenario&) const = default;
};

struct AlertStream {
  std::vector<AttackAlert> alerts;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path.empty() ? "$" : path, "expected object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(join(path, key), "missing field");
  return *it;
}

inline std::string str_field(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_string()) throw SchemaError(join(path, key), "expected string");
  return v.get<std::string>();
}

inline std::string token_field(const json& obj, const std::string& key, const std::string& path) {
  std::string s = str_field(obj, key, path);
  if (!is_canonical_token(s)) {
    throw SchemaError(join(path, key), "'" + s + "' is not a token [A-Za-z0-9_.:/-]+");
  }
  return s;
}

inline const json& array_field(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_array()) throw SchemaError(join(path, key), "expected array");
  return v;
}

inline std::int64_t int_field(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number_integer()) throw SchemaError(join(path, key), "expected integer");
  return v.get<std::int64_t>();
}

inline std::vector<ParamBinding> bindings(const json& obj, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected object");
  std::vector<ParamBinding> out;
  for (const auto& [k, v] : obj.items()) {
    if (!v.is_string() || !is_canonical_token(v.get<std::string>())) {
      throw SchemaError(path + "." + k, "expected token string");
    }
    out.emplace_back(k, v.get<std::string>());
  }
  return out;
}

inline void check_binding(const ToolSpec& tool, const ParamBinding& b, const std::string& path) {
  auto it = std::find_if(tool.params.begin(), tool.params.end(),
                         [&](const ParamSpec& p) { return p.name == b.first; });
  if (it == tool.params.end()) {
    throw SchemaError(path, "tool '" + tool.name + "' has no param '" + b.first + "'");
  }
  if (std::find(it->values.begin(), it->values.end(), b.second) == it->values.end()) {
    throw SchemaError(path, "value '" + b.second + "' outside domain of " + tool.name + "." +
                                b.first);
  }
}

inline ToolSpec parse_tool(const json& j, const std::string& path) {
  ToolSpec t;
  t.name = token_field(j, "name", path);
  const json& params = array_field(j, "params", path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string pp = path + ".params[" + std::to_string(i) + "]";
    ParamSpec p;
    p.name = token_field(params[i], "name", pp);
    const json& values = array_field(params[i], "values", pp);
    if (values.empty()) throw SchemaError(pp + ".values", "empty domain");
    for (std::size_t v = 0; v < values.size(); ++v) {
      const std::string vp = pp + ".values[" + std::to_string(v) + "]";
      if (!values[v].is_string() || !is_canonical_token(values[v].get<std::string>())) {
        throw SchemaError(vp, "expected token string");
      }
      const std::string value = values[v].get<std::string>();
      if (std::find(p.values.begin(), p.values.end(), value) != p.values.end()) {
        throw SchemaError(vp, "duplicate value '" + value + "'");
      }
      p.values.push_back(value);
    }
    if (params[i].contains("broad")) {
      const json& broad = array_field(params[i], "broad", pp);
      for (std::size_t v = 0; v < broad.size(); ++v) {
        const std::string bp = pp + ".broad[" + std::to_string(v) + "]";
        if (!broad[v].is_string()) throw SchemaError(bp, "expected string");
        const std::string value = broad[v].get<std::string>();
        if (std::find(p.values.begin(), p.values.end(), value) == p.values.end()) {
          throw SchemaError(bp, "broad value '" + value + "' not in domain");
        }
        p.broad.insert(value);
      }
    }
    for (const ParamSpec& prev : t.params) {
      if (prev.name == p.name) throw SchemaError(pp + ".name", "duplicate param '" + p.name + "'");
    }
    t.params.push_back(std::move(p));
  }
  if (j.contains("disruptive_when")) {
    const json& clauses = array_field(j, "disruptive_when", path);
    for (std::size_t c = 0; c < clauses.size(); ++c) {
      const std::string cp = path + ".disruptive_when[" + std::to_string(c) + "]";
      auto clause = bindings(clauses[c], cp);
      for (const auto& b : clause) check_binding(t, b, cp + "." + b.first);
      t.disruptive_when.push_back(std::move(clause));
    }
  }
  if (j.contains("blocks")) {
    const json& blocks = array_field(j, "blocks", path);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const std::string bp = path + ".blocks[" + std::to_string(b) + "]";
      const std::string tactic = str_field(blocks[b], "tactic", bp);
      auto parsed = parse_tactic(tactic);
      if (!parsed) throw SchemaError(bp + ".tactic", "unknown tactic '" + tactic + "'");
      t.blocks.insert({*parsed, token_field(blocks[b], "attack_type", bp)});
    }
  }
  if (j.contains("flaky")) {
    const json& f = j.at("flaky");
    if (!f.is_number() || f.get<double>() < 0.0 || f.get<double>() > 1.0) {
      throw SchemaError(path + ".flaky", "expected probability in [0,1]");
    }
    t.flaky = f.get<double>();
  }
  return t;
}

inline EnvironmentDescriptor parse_environment(const json& j, const std::string& path) {
  EnvironmentDescriptor env;
  env.name = str_field(j, "name", path);
  const json& services = array_field(j, "services", path);
  for (std::size_t i = 0; i < services.size(); ++i) {
    const std::string sp = path + ".services[" + std::to_string(i) + "]";
    env.services.emplace_back(token_field(services[i], "name", sp),
                              token_field(services[i], "endpoint", sp));
  }
  const json& prot = array_field(j, "protected_services", path);
  if (prot.empty()) throw SchemaError(path + ".protected_services", "at least one required");
  for (std::size_t i = 0; i < prot.size(); ++i) {
    const std::string pp = path + ".protected_services[" + std::to_string(i) + "]";
    if (!prot[i].is_string()) throw SchemaError(pp, "expected string");
    const std::string name = prot[i].get<std::string>();
    const bool known = std::any_of(env.services.begin(), env.services.end(),
                                   [&](const auto& s) { return s.first == name; });
    if (!known) throw SchemaError(pp, "unknown service '" + name + "'");
    env.protected_services.push_back(name);
  }
  if (j.contains("notes")) env.notes = str_field(j, "notes", path);
  return env;
}

inline AttackStage parse_stage(const json& j, const std::string& path,
                               const std::vector<ToolSpec>& inventory) {
  AttackStage s;
  const std::int64_t index = int_field(j, "index", path);
  if (index < 0) throw SchemaError(path + ".index", "negative index");
  s.index = static_cast<std::size_t>(index);
  s.attack_type = token_field(j, "attack_type", path);
  if (is_benign(s.attack_type)) {
    throw SchemaError(path + ".attack_type", "benign_* types are reserved for noise");
  }
  const auto& table = attack_tactic_table();
  auto mapped = table.find(s.attack_type);
  if (j.contains("tactic")) {
    const std::string tactic = str_field(j, "tactic", path);
    auto parsed = parse_tactic(tactic);
    if (!parsed) throw SchemaError(path + ".tactic", "unknown tactic '" + tactic + "'");
    if (mapped != table.end() && mapped->second != *parsed) {
      throw SchemaError(path + ".tactic", "conflicts with mapping " +
                                              std::string(to_string(mapped->second)));
    }
    s.tactic = *parsed;
  } else {
    if (mapped == table.end()) {
      throw SchemaError(path + ".tactic", "required for unmapped attack type '" + s.attack_type +
                                              "'");
    }
    s.tactic = mapped->second;
  }
  s.zero_day = mapped == table.end();

  const json& alerts = array_field(j, "alerts", path);
  if (alerts.empty()) throw SchemaError(path + ".alerts", "at least one alert template required");
  for (std::size_t i = 0; i < alerts.size(); ++i) {
    const std::string ap = path + ".alerts[" + std::to_string(i) + "]";
    AlertTemplate t;
    t.source = token_field(alerts[i], "source", ap);
    t.target = token_field(alerts[i], "target", ap);
    if (t.source == t.target) throw SchemaError(ap, "source equals target");
    const std::string sev = str_field(alerts[i], "severity", ap);
    auto parsed = parse_severity(sev);
    if (!parsed) throw SchemaError(ap + ".severity", "unknown severity '" + sev + "'");
    t.severity = *parsed;
    if (alerts[i].contains("payload")) t.payload = str_field(alerts[i], "payload", ap);
    s.alert_templates.push_back(std::move(t));
  }

  const json& blocked = array_field(j, "blocked_by", path);
  if (blocked.empty()) throw SchemaError(path + ".blocked_by", "stage must be defensible");
  for (std::size_t i = 0; i < blocked.size(); ++i) {
    const std::string bp = path + ".blocked_by[" + std::to_string(i) + "]";
    MitigationPattern p;
    p.tool = str_field(blocked[i], "tool", bp);
    const ToolSpec* tool = find_tool(inventory, p.tool);
    if (tool == nullptr) throw SchemaError(bp, "unknown tool '" + p.tool + "'");
    if (blocked[i].contains("params")) {
      p.constraints = bindings(blocked[i].at("params"), bp + ".params");
      for (const auto& b : p.constraints) check_binding(*tool, b, bp + ".params." + b.first);
    }
    s.blocked_by.push_back(std::move(p));
  }
  return s;
}

}  // namespace detail

/// Builds a Scenario from a parsed JSON document, validating every
/// cross-reference. Solvability is checked separately (see battlefield).
inline Scenario scenario_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw SchemaError("$", "expected object");
  Scenario s;
  s.name = token_field(j, "name", "");
  if (j.contains("seed_salt")) s.seed_salt = static_cast<std::uint64_t>(int_field(j, "seed_salt", ""));
  if (j.contains("verify_solvable")) {
    const json& v = j.at("verify_solvable");
    if (!v.is_boolean()) throw SchemaError("verify_solvable", "expected boolean");
    s.verify_solvable = v.get<bool>();
  }
  s.environment = parse_environment(field(j, "environment", ""), "environment");

  const json& tools = array_field(j, "tools", "");
  if (tools.empty()) throw SchemaError("tools", "empty inventory");
  for (std::size_t i = 0; i < tools.size(); ++i) {
    const std::string tp = "tools[" + std::to_string(i) + "]";
    ToolSpec t = parse_tool(tools[i], tp);
    if (find_tool(s.inventory, t.name) != nullptr) {
      throw SchemaError(tp + ".name", "duplicate tool '" + t.name + "'");
    }
    s.inventory.push_back(std::move(t));
  }

  const json& chain = array_field(j, "chain", "");
  if (chain.empty()) throw SchemaError("chain", "chain length must be >= 1");
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const std::string cp = "chain[" + std::to_string(i) + "]";
    AttackStage stage = parse_stage(chain[i], cp, s.inventory);
    if (!s.chain.empty() && stage.index <= s.chain.back().index) {
      throw SchemaError(cp + ".index", "indices must be strictly increasing");
    }
    s.chain.push_back(std::move(stage));
  }

  if (j.contains("noise")) {
    const json& n = j.at("noise");
    s.noise.duplication = int_field(n, "duplication", "noise");
    s.noise.benign_rate = int_field(n, "benign_rate", "noise");
    if (s.noise.duplication < 1) throw SchemaError("noise.duplication", "must be >= 1");
    if (s.noise.benign_rate < 0) throw SchemaError("noise.benign_rate", "must be >= 0");
  }
  return s;
}

inline Scenario parse_scenario(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$", std::string("malformed document: ") + e.what());
  }
  return scenario_from_json(j);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// IDS emulation

inline constexpr std::int64_t kStageWindowMs = 60'000;
inline constexpr std::int64_t kAlertSpacingMs = 100;

/// Deterministic alert stream for (scenario, seed). Each stage window holds
/// every template duplicated k ~ U{1..d} times, in template order, with b
/// benign alerts inserted at random positions.
inline AlertStream emit_alerts(const Scenario& scenario, std::uint64_t rng_seed) {
  static constexpr std::array<std::string_view, 4> kBenignKinds = {"dns_lookup", "http_get",
                                                                   "ntp_sync", "tls_handshake"};
  Rng rng(stable_hash(scenario.seed_salt, rng_seed));
  AlertStream stream;
  std::int64_t clock = 0;
  std::size_t seq = 0;

  for (std::size_t si = 0; si < scenario.chain.size(); ++si) {
    const AttackStage& stage = scenario.chain[si];
    std::vector<AttackAlert> window;
    for (const AlertTemplate& t : stage.alert_templates) {
      const auto copies =
          rng.uniform_int(1, static_cast<std::uint64_t>(scenario.noise.duplication));
      for (std::uint64_t c = 0; c < copies; ++c) {
        AttackAlert a;
        a.attack_type = stage.attack_type;
        a.severity = t.severity;
        a.source = t.source;
        a.target = t.target;
        a.stage_tag = stage.tactic;
        a.payload_summary = t.payload;
        window.push_back(std::move(a));
      }
    }
    for (std::int64_t b = 0; b < scenario.noise.benign_rate; ++b) {
      AttackAlert a;
      a.attack_type = "benign_" + std::string(kBenignKinds[rng.uniform_int(0, 3)]);
      a.severity = Severity::kLow;
      a.source = "192.168.1." + std::to_string(10 + rng.uniform_int(0, 200));
      const auto& services = scenario.environment.services;
      a.target = services.empty()
                     ? std::string("10.0.0.1")
                     : services[rng.uniform_int(0, services.size() - 1)].second;
      a.payload_summary = "routine traffic";
      const auto pos = rng.uniform_int(0, window.size());
      window.insert(window.begin() + static_cast<std::ptrdiff_t>(pos), std::move(a));
    }
    clock = std::max(clock, static_cast<std::int64_t>(si) * kStageWindowMs);
    for (AttackAlert& a : window) {
      a.timestamp = clock;
      a.id = scenario.name + "-" + std::to_string(seq++);
      clock += kAlertSpacingMs;
      stream.alerts.push_back(std::move(a));
    }
  }
  return stream;
}

}  // namespace secloop
