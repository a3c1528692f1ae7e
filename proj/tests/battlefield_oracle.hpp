#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secloop/battlefield.hpp"
#include "secloop/core.hpp"
#include "secloop/strategy_text.hpp"

namespace secloop::testing {

// Brute-force reference model built straight from the scenario document,
// sharing no code with the simulator beyond the strategy type.
class Oracle {
 public:
  explicit Oracle(const nlohmann::json& doc) {
    for (const auto& t : doc["tools"]) {
      Tool tool;
      for (const auto& p : t["params"]) {
        tool.params.emplace_back(p["name"].get<std::string>(),
                                 p["values"].get<std::vector<std::string>>());
      }
      if (t.contains("disruptive_when")) {
        for (const auto& c : t["disruptive_when"]) tool.disruptive.push_back(c.get<std::map<std::string, std::string>>());
      }
      if (t.contains("flaky")) tool.flaky = t["flaky"].get<double>();
      tools[t["name"].get<std::string>()] = tool;
    }
    static const std::set<std::string> impact_types = {"dns_hijacking", "mitm", "dos", "ddos"};
    for (const auto& s : doc["chain"]) {
      Stage st;
      st.impact = s.contains("tactic") ? s["tactic"] == "Impact"
                                       : impact_types.contains(s["attack_type"].get<std::string>());
      for (const auto& b : s["blocked_by"]) {
        st.blockers.emplace_back(b["tool"].get<std::string>(),
                                 b.contains("params") ? b["params"].get<std::map<std::string, std::string>>()
                                                      : std::map<std::string, std::string>{});
      }
      stages.push_back(st);
    }
  }

  FeedbackReport run(const SecurityStrategy& s) const {
    std::vector<int> tool_out;
    std::vector<ToolCall> installed;
    bool up = true;
    for (const ToolCall& c : s.calls) {
      const auto it = tools.find(c.tool_name);
      bool ok = it != tools.end() && it->second.params.size() == c.params.size();
      for (std::size_t i = 0; ok && i < c.params.size(); ++i) {
        const auto& [name, domain] = it->second.params[i];
        ok = c.params[i].first == name &&
             std::find(domain.begin(), domain.end(), c.params[i].second) != domain.end();
      }
      tool_out.push_back(ok ? 1 : 0);
      if (!ok) continue;
      installed.push_back(c);
      for (const auto& clause : it->second.disruptive) {
        bool all = true;
        for (const auto& [k, v] : clause) {
          bool found = false;
          for (const auto& [pk, pv] : c.params) found |= pk == k && pv == v;
          all &= found;
        }
        if (all) up = false;
      }
    }
    std::vector<int> stage_out;
    bool broken = false;
    for (const Stage& st : stages) {
      bool blocked = false;
      for (const auto& [tool, constraints] : st.blockers) {
        for (const ToolCall& c : installed) {
          if (c.tool_name != tool) continue;
          bool all = true;
          for (const auto& [k, v] : constraints) {
            bool found = false;
            for (const auto& [pk, pv] : c.params) found |= pk == k && pv == v;
            all &= found;
          }
          blocked |= all;
        }
      }
      broken |= blocked;
      stage_out.push_back(broken ? 0 : 1);
      if (!broken && st.impact) up = false;
    }
    FeedbackReport r;
    std::int64_t th = 0, sh = 0;
    for (int t : tool_out) th += t;
    for (int x : stage_out) sh += x;
    r.rs_exe = tool_out.empty() ? Rational(0) : Rational(th, static_cast<std::int64_t>(tool_out.size()));
    r.rs_attack = Rational(sh, static_cast<std::int64_t>(stage_out.size()));
    r.rs_service = Rational(up ? 1 : 0);
    r.feedback_sum = r.rs_exe + r.rs_attack + r.rs_service;
    r.tool_outcomes = tool_out;
    r.stage_outcomes = stage_out;
    return r;
  }

  // Every in-domain call, plus a few near-misses that must fail.
  std::vector<ToolCall> candidate_calls() const {
    std::vector<ToolCall> out;
    for (const auto& [name, tool] : tools) {
      std::vector<ToolCall> partial{{name, {}}};
      for (const auto& [pname, domain] : tool.params) {
        std::vector<ToolCall> next;
        for (const ToolCall& c : partial) {
          for (const auto& v : domain) {
            ToolCall e = c;
            e.params.emplace_back(pname, v);
            next.push_back(e);
          }
        }
        partial = next;
      }
      out.insert(out.end(), partial.begin(), partial.end());
    }
    const auto& [first_name, first_tool] = *tools.begin();
    out.push_back({"firewalld", {{"zone", "drop"}}});
    if (!first_tool.params.empty()) {
      out.push_back({first_name, {{first_tool.params[0].first, "not-in-domain"}}});
      out.push_back({first_name, {}});
    }
    return out;
  }

 private:
  struct Tool {
    std::vector<std::pair<std::string, std::vector<std::string>>> params;
    std::vector<std::map<std::string, std::string>> disruptive;
    double flaky = 0.0;
  };
  struct Stage {
    bool impact = false;
    std::vector<std::pair<std::string, std::map<std::string, std::string>>> blockers;
  };
  std::map<std::string, Tool> tools;
  std::vector<Stage> stages;
};

struct OracleSweep {
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  std::string first_mismatch;
};

/// Runs every strategy of at most max_len candidate calls through both the
/// simulator and the oracle.
inline OracleSweep sweep_against_oracle(const Scenario& s, const Oracle& oracle, std::size_t max_len = 3) {
  OracleSweep out;
  const auto calls = oracle.candidate_calls();
  std::vector<std::size_t> pick;
  auto visit = [&](auto&& self, std::size_t depth) -> void {
    SecurityStrategy st;
    for (std::size_t i : pick) st.calls.push_back(calls[i]);
    st.raw_text = serialize_strategy(st);
    ++out.checked;
    if (run_episode(s, st, 1234) != oracle.run(st)) {
      if (out.mismatches++ == 0) out.first_mismatch = st.raw_text;
    }
    if (depth == max_len) return;
    for (std::size_t i = 0; i < calls.size(); ++i) {
      pick.push_back(i);
      self(self, depth + 1);
      pick.pop_back();
    }
  };
  visit(visit, 0);
  return out;
}

}  // namespace secloop::testing
