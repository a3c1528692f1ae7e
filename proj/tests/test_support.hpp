#pragma once

#include <string>
#include <vector>

#include "secloop/battlefield.hpp"
#include "secloop/rng.hpp"
#include "secloop/scenario.hpp"
#include "secloop/strategy_text.hpp"

namespace secloop::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(SECLOOP_SCENARIO_DIR) + "/" + name + ".json";
}

inline const Scenario& bundled() {
  static const Scenario s = load_scenario(scenario_path("sql_injection_basic"));
  return s;
}

inline std::string random_token(Rng& rng) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.:/-";
  std::string t;
  const auto len = rng.uniform_int(1, 12);
  for (std::uint64_t i = 0; i < len; ++i) t += alphabet[rng.uniform_int(0, alphabet.size() - 1)];
  return t;
}

inline SecurityStrategy random_strategy(Rng& rng, std::size_t max_calls = 5) {
  SecurityStrategy s;
  const auto calls = rng.uniform_int(0, max_calls);
  for (std::uint64_t c = 0; c < calls; ++c) {
    ToolCall call{random_token(rng), {}};
    const auto params = rng.uniform_int(0, 3);
    for (std::uint64_t p = 0; p < params; ++p) call.params.emplace_back(random_token(rng), random_token(rng));
    s.calls.push_back(std::move(call));
  }
  return s;
}

inline SecurityStrategy strategy_of(std::vector<ToolCall> calls) {
  SecurityStrategy s;
  s.calls = std::move(calls);
  s.raw_text = serialize_strategy(s);
  return s;
}

}  // namespace secloop::testing
