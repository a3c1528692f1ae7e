#include <gtest/gtest.h>

#include "secloop/core.hpp"
#include "secloop/hash.hpp"
#include "secloop/rng.hpp"
#include "test_support.hpp"

using namespace secloop;

TEST(Rational, ToStringAndParse) {
  EXPECT_EQ(to_string(Rational(3, 4)), "3/4");
  EXPECT_EQ(to_string(Rational(2, 2)), "1");
  EXPECT_EQ(to_string(Rational(-1, 4)), "-1/4");
  EXPECT_EQ(parse_rational("6/8"), Rational(3, 4));
  EXPECT_EQ(parse_rational("0"), Rational(0));
  EXPECT_THROW(parse_rational("x/2"), std::invalid_argument);
}

TEST(Rational, MeanOfOutcomes) {
  EXPECT_EQ(mean_of({1, 1, 1, 0}), Rational(3, 4));
  EXPECT_EQ(mean_of({}), Rational(0));
}

TEST(Enums, SeverityAndTacticNames) {
  EXPECT_EQ(parse_severity("critical"), Severity::kCritical);
  EXPECT_FALSE(parse_severity("severe").has_value());
  EXPECT_EQ(kTacticNames.size(), 13u);
  for (std::size_t i = 0; i < kTacticNames.size(); ++i) {
    EXPECT_EQ(parse_tactic(kTacticNames[i]), static_cast<AttackTactic>(i));
  }
  EXPECT_EQ(parse_tactic("CommandAndControl"), AttackTactic::kCommandAndControl);
  EXPECT_FALSE(parse_tactic("Recon").has_value());
}

TEST(AttackAlert, Invariants) {
  AttackAlert a{"a1", 0, "sql_injection", Severity::kHigh, "1.2.3.4", "10.0.0.5", {}, ""};
  EXPECT_NO_THROW(check_alert(a));
  a.timestamp = -1;
  EXPECT_THROW(check_alert(a), std::invalid_argument);
  a.timestamp = 0;
  a.target = a.source;
  EXPECT_THROW(check_alert(a), std::invalid_argument);
  EXPECT_TRUE(is_benign("benign_dns_lookup"));
  EXPECT_FALSE(is_benign("sql_injection"));
}

namespace {

std::vector<ToolSpec> inventory() {
  ToolSpec block{"block_ip", {{"ip", {"10.0.0.9", "0.0.0.0/0"}, {"0.0.0.0/0"}}},
                 {{{"ip", "0.0.0.0/0"}}}, {}, 0.0};
  ToolSpec waf{"waf_rule", {{"rule", {"sqli", "xss"}, {}}}, {}, {}, 0.0};
  return {block, waf};
}

}  // namespace

TEST(ValidateAgainstInventory, Flags) {
  const auto inv = inventory();
  SecurityStrategy s;
  s.calls = {{"block_ip", {{"ip", "10.0.0.9"}}}};
  EXPECT_EQ(validate_against_inventory(s, inv), std::vector<bool>{true});
  s.calls = {{"firewalld", {{"ip", "10.0.0.9"}}}};
  EXPECT_EQ(validate_against_inventory(s, inv), std::vector<bool>{false});
  s.calls = {{"block_ip", {{"ip", "10.0.0.10"}}}};
  EXPECT_EQ(validate_against_inventory(s, inv), std::vector<bool>{false});
  s.calls = {{"block_ip", {}}, {"waf_rule", {{"rule", "xss"}}}, {"waf_rule", {{"mode", "xss"}}}};
  EXPECT_EQ(validate_against_inventory(s, inv), (std::vector<bool>{false, true, false}));
}

TEST(Disruption, PredicateOverParams) {
  const auto inv = inventory();
  EXPECT_TRUE(is_disruptive({"block_ip", {{"ip", "0.0.0.0/0"}}}, inv[0]));
  EXPECT_FALSE(is_disruptive({"block_ip", {{"ip", "10.0.0.9"}}}, inv[0]));
  EXPECT_FALSE(is_disruptive({"waf_rule", {{"rule", "sqli"}}}, inv[1]));
}

TEST(FeedbackReport, ArithmeticRecomputesExactly) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> tools(rng.uniform_int(0, 6)), stages(rng.uniform_int(1, 5));
    for (int& t : tools) t = static_cast<int>(rng.uniform_int(0, 1));
    for (int& s : stages) s = static_cast<int>(rng.uniform_int(0, 1));
    const bool up = rng.uniform_int(0, 1) == 1;
    const FeedbackReport r = make_report(tools, stages, up);
    std::int64_t tool_hits = 0, stage_hits = 0;
    for (int t : tools) tool_hits += t;
    for (int s : stages) stage_hits += s;
    const Rational exe = tools.empty() ? Rational(0) : Rational(tool_hits, static_cast<std::int64_t>(tools.size()));
    EXPECT_EQ(r.rs_exe, exe);
    EXPECT_EQ(r.rs_attack, Rational(stage_hits, static_cast<std::int64_t>(stages.size())));
    EXPECT_EQ(r.rs_service, Rational(up ? 1 : 0));
    EXPECT_EQ(r.feedback_sum, r.rs_exe + r.rs_attack + r.rs_service);
    EXPECT_GE(r.feedback_sum, Rational(0));
    EXPECT_LE(r.feedback_sum, Rational(3));
  }
}

TEST(FeedbackReport, EmptyStrategyExecutesNothing) {
  const FeedbackReport r = make_report({}, {1, 1}, false);
  EXPECT_EQ(r.rs_exe, Rational(0));
  EXPECT_EQ(r.rs_attack, Rational(1));
  EXPECT_EQ(r.feedback_sum, Rational(1));
}

TEST(Records, RationalsAreExactStrings) {
  const auto j = to_record(make_report({1, 1, 1, 0}, {1, 0}, true));
  EXPECT_EQ(j.dump(),
            R"({"tool_outcomes":[1,1,1,0],"stage_outcomes":[1,0],"rs_exe":"3/4","rs_attack":"1/2","rs_service":"1","feedback_sum":"9/4"})");
  RewardBreakdown b;
  b.r_format = 1;
  b.r_exec = 1;
  b.r_eva = Rational(1, 2);
  b.total = Rational(5, 2);
  EXPECT_EQ(parse_rational(to_record(b)["total"].get<std::string>()), Rational(5, 2));
}

TEST(StableHash, Fnv1aReferenceVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(stable_hash(1, 2), stable_hash(1, 2));
  EXPECT_NE(stable_hash(1, 2), stable_hash(2, 1));
}

TEST(Rng, DeterministicAndInRange) {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const auto k = a.uniform_int(3, 7);
    EXPECT_EQ(k, b.uniform_int(3, 7));
    EXPECT_GE(k, 3u);
    EXPECT_LE(k, 7u);
  }
}
