#pragma once

// Alert compression and prompt rendering.
//
// Rendered prompt, format version 1:
//
//   ALERTS
//   type=<attack_type> src=<source> dst=<target> severity=<max> tactics=<T1,T2|->
//   TOOLS
//   <tool> <param>={<v1>|<v2>} ...
//   ENVIRONMENT
//   name=<name> protected=<s1,s2> notes=<notes>
//
// Counts and timestamps stay in AlertSummary but are not rendered: they vary
// with IDS noise, and the policy buckets prompts by a hash of the rendered
// text, so rendering them would scatter one attack across many buckets.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "secloop/core.hpp"
#include "secloop/hash.hpp"
#include "secloop/scenario.hpp"

namespace secloop {

inline constexpr std::uint32_t kPromptFormatVersion = 1;
inline constexpr std::size_t kDefaultPromptBuckets = 64;

struct Prompt {
  std::vector<AlertSummary> summaries;
  std::vector<std::pair<std::string, std::vector<ParamSpec>>> inventory_view;
  std::string environment_name;
  std::vector<std::string> protected_services;
  std::string notes;
  std::string rendered;
  std::size_t context_hash = 0;
};

namespace detail {

inline bool summary_order(const AlertSummary& a, const AlertSummary& b) {
  return std::tie(a.first_seen, a.attack_type, a.source, a.target) <
         std::tie(b.first_seen, b.attack_type, b.source, b.target);
}

}  // namespace detail

/// Groups non-benign alerts by (attack_type, source, target).
inline std::vector<AlertSummary> summarize(const AlertStream& stream) {
  std::map<std::tuple<std::string, std::string, std::string>, AlertSummary> groups;
  for (const AttackAlert& a : stream.alerts) {
    if (is_benign(a.attack_type)) continue;
    auto key = std::make_tuple(a.attack_type, a.source, a.target);
    auto it = groups.find(key);
    if (it == groups.end()) {
      AlertSummary s;
      s.attack_type = a.attack_type;
      s.source = a.source;
      s.target = a.target;
      s.count = 1;
      s.first_seen = s.last_seen = a.timestamp;
      s.max_severity = a.severity;
      if (a.stage_tag) s.stage_tags.insert(*a.stage_tag);
      groups.emplace(std::move(key), std::move(s));
      continue;
    }
    AlertSummary& s = it->second;
    ++s.count;
    s.first_seen = std::min(s.first_seen, a.timestamp);
    s.last_seen = std::max(s.last_seen, a.timestamp);
    s.max_severity = std::max(s.max_severity, a.severity);
    if (a.stage_tag) s.stage_tags.insert(*a.stage_tag);
  }
  std::vector<AlertSummary> out;
  out.reserve(groups.size());
  for (auto& [key, s] : groups) out.push_back(std::move(s));
  std::sort(out.begin(), out.end(), detail::summary_order);
  return out;
}

inline Prompt build_prompt(std::vector<AlertSummary> summaries,
                           const std::vector<ToolSpec>& inventory,
                           const EnvironmentDescriptor& environment,
                           std::size_t buckets = kDefaultPromptBuckets) {
  if (buckets == 0) throw std::invalid_argument("bucket count must be >= 1");
  std::sort(summaries.begin(), summaries.end(), detail::summary_order);

  Prompt p;
  std::string text = "ALERTS\n";
  for (const AlertSummary& s : summaries) {
    text += "type=" + s.attack_type + " src=" + s.source + " dst=" + s.target +
            " severity=" + std::string(to_string(s.max_severity)) + " tactics=";
    if (s.stage_tags.empty()) text += "-";
    bool first = true;
    for (AttackTactic t : s.stage_tags) {
      if (!first) text += ",";
      text += to_string(t);
      first = false;
    }
    text += "\n";
  }
  text += "TOOLS\n";
  for (const ToolSpec& t : inventory) {
    text += t.name;
    for (const ParamSpec& param : t.params) {
      text += " " + param.name + "={";
      for (std::size_t v = 0; v < param.values.size(); ++v) {
        if (v > 0) text += "|";
        text += param.values[v];
      }
      text += "}";
    }
    text += "\n";
    p.inventory_view.emplace_back(t.name, t.params);
  }
  text += "ENVIRONMENT\nname=" + environment.name + " protected=";
  for (std::size_t i = 0; i < environment.protected_services.size(); ++i) {
    if (i > 0) text += ",";
    text += environment.protected_services[i];
  }
  text += " notes=" + environment.notes + "\n";

  p.summaries = std::move(summaries);
  p.environment_name = environment.name;
  p.protected_services = environment.protected_services;
  p.notes = environment.notes;
  p.context_hash = static_cast<std::size_t>(fnv1a(text) % buckets);
  p.rendered = std::move(text);
  return p;
}

}  // namespace secloop
