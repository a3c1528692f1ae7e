#pragma once

// Adapter for an external scoring endpoint standing in for the rule judge.
//
//   POST <path>   {"strategy": "<canonical text or raw output>", "prompt_context": "<prompt>"}
//   200           {"rationality": <number in [0,1]>}
//
// Any transport failure, timeout, bad status or malformed body fails open:
// rationality 1 and a warning on the configured stream.

#include <chrono>
#include <cmath>
#include <iostream>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "secloop/rewards.hpp"
#include "secloop/strategy_text.hpp"

namespace secloop {

class RemoteJudge final : public StrategyJudge {
 public:
  RemoteJudge(std::string host, int port, std::string path = "/judge",
              std::chrono::milliseconds timeout = std::chrono::milliseconds(2000),
              std::ostream* warnings = &std::cerr)
      : host_(std::move(host)),
        port_(port),
        path_(std::move(path)),
        timeout_(timeout),
        warnings_(warnings) {}

  JudgeVerdict judge(const ParsedOutput& output, const JudgeContext& ctx) const override {
    nlohmann::ordered_json body;
    if (const auto* s = std::get_if<SecurityStrategy>(&output)) {
      body["strategy"] = s->raw_text.empty() ? serialize_strategy(*s) : s->raw_text;
    } else {
      body["strategy"] = nullptr;
    }
    body["prompt_context"] = std::string(ctx.prompt_text);

    httplib::Client client(host_, port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) return fail_open("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) return fail_open("status " + std::to_string(res->status));
    double r = 0.0;
    try {
      r = nlohmann::json::parse(res->body).at("rationality").get<double>();
    } catch (const std::exception& e) {
      return fail_open(std::string("malformed response: ") + e.what());
    }
    if (!std::isfinite(r) || r < 0.0 || r > 1.0) return fail_open("rationality out of range");

    JudgeVerdict v;
    v.rationality = Rational(static_cast<std::int64_t>(std::llround(r * kScale)), kScale);
    if (v.rationality < Rational(1)) v.reasons.push_back("external");
    return v;
  }

 private:
  static constexpr std::int64_t kScale = 1'000'000;

  JudgeVerdict fail_open(const std::string& why) const {
    if (warnings_ != nullptr) *warnings_ << "warning: remote judge unavailable (" << why << "); rationality = 1\n";
    return JudgeVerdict{};
  }

  std::string host_;
  int port_;
  std::string path_;
  std::chrono::milliseconds timeout_;
  std::ostream* warnings_;
};

}  // namespace secloop
