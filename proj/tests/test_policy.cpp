#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "secloop/policy.hpp"
#include "secloop/rewards.hpp"
#include "test_support.hpp"

using namespace secloop;
using secloop::testing::bundled;
using secloop::testing::strategy_of;

namespace {

std::vector<ToolSpec> two_tool_inventory() {
  ToolSpec a{"block_ip", {ParamSpec{"ip", {"10.0.0.9"}, {}}}, {}, {}, 0.0};
  ToolSpec b{"waf_rule", {ParamSpec{"rule", {"sqli"}, {}}}, {}, {}, 0.0};
  return {a, b};
}

PolicyWeights random_weights(std::uint64_t seed, std::size_t h = 4) {
  PolicyWeights w(Vocabulary::from_inventory(bundled().inventory), h);
  Rng rng(seed);
  for (double& x : w.logits) x = 2.0 * rng.uniform() - 1.0;
  return w;
}

std::vector<std::size_t> tokens_of(const PolicyWeights& w, const std::vector<ToolCall>& calls) {
  return *encode(strategy_of(calls), w.vocabulary);
}

}  // namespace

TEST(Vocabulary, LayoutForBundledScenario) {
  const Vocabulary v = Vocabulary::from_inventory(bundled().inventory);
  EXPECT_EQ(v.size(), 16u);
  EXPECT_EQ(v.tokens[Vocabulary::kBegin], "<BEGIN>");
  EXPECT_EQ(v.tokens[4], "block_ip");
  EXPECT_TRUE(v.is_tool(7));
  EXPECT_TRUE(v.is_value(8));
  EXPECT_FALSE(v.is_tool(8));
}

TEST(Sample, UniformLogitsGiveUniformLogprob) {
  PolicyWeights w(Vocabulary::from_inventory(two_tool_inventory()), 2);
  ASSERT_EQ(w.vocab_size(), 8u);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory t = sample(w, 1, 24, 1.0, seed);
    for (double lp : t.per_token_logprob) EXPECT_NEAR(lp, -std::log(8.0), 1e-12);
    EXPECT_NEAR(t.total_logprob, -std::log(8.0) * static_cast<double>(t.tokens.size()), 1e-9);
  }
}

TEST(Sample, DeterministicGivenSeed) {
  const PolicyWeights w = random_weights(1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory a = sample(w, 2, 24, 0.7, seed);
    const Trajectory b = sample(w, 2, 24, 0.7, seed);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.per_token_logprob, b.per_token_logprob);
  }
}

TEST(Sample, DominantLogitIsAlwaysDrawn) {
  PolicyWeights w(Vocabulary::from_inventory(two_tool_inventory()), 1);
  auto row = w.row(w.context_at(0, std::vector<std::size_t>{}, 0));
  row[5] = 50.0;
  const auto p = softmax(row);
  EXPECT_GT(p[5], 1.0 - 1e-9);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) EXPECT_EQ(sample(w, 0, 2, 1.0, seed).tokens[0], 5u);
}

TEST(Sample, StopsAtEndOrMaxLen) {
  const PolicyWeights w = random_weights(2);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Trajectory t = sample(w, 0, 6, 1.0, seed);
    EXPECT_LE(t.tokens.size(), 6u);
    for (std::size_t i = 0; i + 1 < t.tokens.size(); ++i) EXPECT_NE(t.tokens[i], Vocabulary::kEnd);
  }
  EXPECT_THROW(sample(w, 0, 1, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(sample(w, 0, 8, 0.0, 0), std::invalid_argument);
}

TEST(Logprob, MatchesRecordedAtAnyTemperature) {
  const PolicyWeights w = random_weights(3);
  for (double temp : {1.0, 0.5, 2.0}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Trajectory t = sample(w, 3, 24, temp, seed);
      const LogProb lp = logprob(w, 3, t.tokens);
      ASSERT_EQ(lp.per_token.size(), t.per_token_logprob.size());
      for (std::size_t i = 0; i < lp.per_token.size(); ++i) EXPECT_DOUBLE_EQ(lp.per_token[i], t.per_token_logprob[i]);
      EXPECT_NEAR(lp.total, t.total_logprob, 1e-12);
    }
  }
}

TEST(Logprob, TwoTokenMassOnStructuralVocabulary) {
  PolicyWeights w(Vocabulary{}, 1);
  ASSERT_EQ(w.vocab_size(), 4u);
  Rng rng(4);
  for (double& x : w.logits) x = 3.0 * rng.uniform() - 1.5;
  double mass = 0.0;
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      const std::vector<std::size_t> seq{a, b};
      mass += std::exp(logprob(w, 0, seq).total);
    }
  }
  EXPECT_LE(mass, 1.0 + 1e-12);
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(Logprob, ShiftInvariance) {
  PolicyWeights w = random_weights(5);
  const Trajectory t = sample(w, 1, 24, 1.0, 9);
  const LogProb before = logprob(w, 1, t.tokens);
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    for (double& x : w.row(w.context_at(1, t.tokens, i))) x += 7.25;
  }
  const LogProb after = logprob(w, 1, t.tokens);
  for (std::size_t i = 0; i < before.per_token.size(); ++i) EXPECT_NEAR(before.per_token[i], after.per_token[i], 1e-12);
  EXPECT_EQ(sample(w, 1, 24, 1.0, 9).tokens, t.tokens);
}

TEST(Logprob, UnknownTokenAndBucket) {
  const PolicyWeights w = random_weights(6);
  const std::vector<std::size_t> bad{0, 99};
  EXPECT_THROW(logprob(w, 0, bad), UnknownToken);
  EXPECT_THROW(grad_logprob(w, 0, bad), UnknownToken);
  const std::vector<std::size_t> ok{0, 1};
  EXPECT_THROW(logprob(w, 4, ok), std::invalid_argument);
}

TEST(Softmax, NormalizedForEveryContext) {
  const PolicyWeights w = random_weights(7, 2);
  for (std::size_t c = 0; c < w.contexts(); ++c) {
    const auto p = softmax(w.row(c));
    double s = 0.0;
    for (double x : p) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(GradLogprob, RowsSumToZero) {
  const PolicyWeights w = random_weights(8);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Trajectory t = sample(w, 0, 24, 1.0, seed);
    for (const auto& [ctx, row] : grad_logprob(w, 0, t.tokens)) {
      double s = 0.0;
      for (double x : row) s += x;
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
  }
}

TEST(GradLogprob, MatchesFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    PolicyWeights w = random_weights(10 + trial);
    const Trajectory t = sample(w, 1, 24, 1.0, trial);
    const SparseGrad g = grad_logprob(w, 1, t.tokens);
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (const auto& [ctx, row] : g) {
      for (std::size_t v = 0; v < row.size(); ++v) coords.emplace_back(ctx, v);
    }
    Rng rng(trial);
    for (int k = 0; k < 20; ++k) {
      const auto [ctx, v] = coords[rng.uniform_int(0, coords.size() - 1)];
      const double h = 1e-5;
      double& x = w.row(ctx)[v];
      const double orig = x;
      x = orig + h;
      const double up = logprob(w, 1, t.tokens).total;
      x = orig - h;
      const double down = logprob(w, 1, t.tokens).total;
      x = orig;
      const double fd = (up - down) / (2 * h);
      const double an = g.at(ctx)[v];
      EXPECT_LE(std::abs(fd - an), 1e-6 * std::max(1.0, std::abs(an))) << ctx << "," << v;
    }
  }
}

TEST(GradLogprob, UnvisitedContextsAreZero) {
  PolicyWeights w = random_weights(11);
  const Trajectory t = sample(w, 2, 24, 1.0, 3);
  const SparseGrad g = grad_logprob(w, 2, t.tokens);
  std::set<std::size_t> visited;
  for (std::size_t i = 0; i < t.tokens.size(); ++i) visited.insert(w.context_at(2, t.tokens, i));
  for (const auto& [ctx, row] : g) EXPECT_TRUE(visited.contains(ctx));
  const double before = logprob(w, 2, t.tokens).total;
  for (std::size_t c = 0; c < w.contexts(); ++c) {
    if (visited.contains(c)) continue;
    for (double& x : w.row(c)) x += 3.0;
  }
  EXPECT_DOUBLE_EQ(logprob(w, 2, t.tokens).total, before);
}

TEST(Decode, Examples) {
  const auto inv = two_tool_inventory();
  const Vocabulary v = Vocabulary::from_inventory(inv);
  const std::size_t block = *v.index_of("block_ip");
  const std::size_t ip = *v.index_of("10.0.0.9");
  const std::vector<std::size_t> one{Vocabulary::kBegin, block, Vocabulary::kParamSep, ip, Vocabulary::kEnd};
  EXPECT_EQ(decode(one, v, inv), R"({"tool_calls": [{"tool": "block_ip", "params": {"ip": "10.0.0.9"}}]})");
  const std::vector<std::size_t> empty{Vocabulary::kBegin, Vocabulary::kEnd};
  EXPECT_EQ(decode(empty, v, inv), R"({"tool_calls": []})");
  const std::vector<std::size_t> orphan{Vocabulary::kBegin, Vocabulary::kParamSep, Vocabulary::kEnd};
  EXPECT_EQ(format_reward(decode(orphan, v, inv)), Rational(0));
}

TEST(Decode, StructuralViolationsAreMalformed) {
  const auto& inv = bundled().inventory;
  const Vocabulary v = Vocabulary::from_inventory(inv);
  const std::vector<std::vector<std::size_t>> bad = {
      {},
      {Vocabulary::kBegin},
      {Vocabulary::kBegin, Vocabulary::kBegin, Vocabulary::kEnd},
      {Vocabulary::kBegin, 4, Vocabulary::kEnd},
      {Vocabulary::kBegin, 4, Vocabulary::kParamSep, 8, Vocabulary::kParamSep, 9, Vocabulary::kEnd},
      {Vocabulary::kBegin, 4, Vocabulary::kParamSep, 8, Vocabulary::kCallSep, Vocabulary::kEnd},
      {Vocabulary::kBegin, Vocabulary::kEnd, Vocabulary::kEnd},
      {8, Vocabulary::kEnd},
  };
  for (const auto& seq : bad) EXPECT_EQ(format_reward(decode(seq, v, inv)), Rational(0));
}

TEST(Decode, StructurallyValidSequencesPassFormat) {
  const auto& inv = bundled().inventory;
  const Vocabulary v = Vocabulary::from_inventory(inv);
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::size_t> seq{Vocabulary::kBegin};
    const auto calls = rng.uniform_int(0, 4);
    for (std::uint64_t c = 0; c < calls; ++c) {
      if (c > 0) seq.push_back(Vocabulary::kCallSep);
      const ToolSpec& tool = inv[rng.uniform_int(0, inv.size() - 1)];
      seq.push_back(*v.index_of(tool.name));
      for (const ParamSpec& p : tool.params) {
        seq.push_back(Vocabulary::kParamSep);
        seq.push_back(*v.index_of(p.values[rng.uniform_int(0, p.values.size() - 1)]));
      }
    }
    seq.push_back(Vocabulary::kEnd);
    const std::string text = decode(seq, v, inv);
    EXPECT_EQ(format_reward(text), Rational(1)) << text;
    const auto round = encode(std::get<SecurityStrategy>(parse_strategy(text)), v);
    ASSERT_TRUE(round.has_value());
    EXPECT_EQ(*round, seq);
  }
}

TEST(Decode, RandomTokenSequencesNeverThrow) {
  const auto& inv = bundled().inventory;
  const Vocabulary v = Vocabulary::from_inventory(inv);
  Rng rng(13);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::size_t> seq;
    const auto len = rng.uniform_int(0, 12);
    for (std::uint64_t i = 0; i < len; ++i) seq.push_back(rng.uniform_int(0, v.size() - 1));
    const std::string text = decode(seq, v, inv);
    const Rational f = format_reward(text);
    EXPECT_TRUE(f == Rational(0) || f == Rational(1));
  }
}

TEST(Encode, UnknownNamesAreRejected) {
  const Vocabulary v = Vocabulary::from_inventory(bundled().inventory);
  EXPECT_FALSE(encode(strategy_of({{"firewalld", {}}}), v).has_value());
  EXPECT_FALSE(encode(strategy_of({{"block_ip", {{"ip", "1.2.3.4"}}}}), v).has_value());
}

TEST(Greedy, UniformInitPicksBeginForever) {
  PolicyWeights w(Vocabulary::from_inventory(bundled().inventory), 8);
  const Trajectory t = greedy(w, 0, 24);
  EXPECT_EQ(t.tokens, std::vector<std::size_t>(24, Vocabulary::kBegin));
}

TEST(Greedy, FollowsPlantedPath) {
  PolicyWeights w(Vocabulary::from_inventory(bundled().inventory), 8);
  const auto seq = tokens_of(w, {{"waf_rule", {{"rule", "sqli"}}}});
  for (std::size_t i = 0; i < seq.size(); ++i) w.row(w.context_at(5, seq, i))[seq[i]] = 5.0;
  EXPECT_EQ(greedy(w, 5, 24).tokens, seq);
  EXPECT_EQ(decode(seq, w.vocabulary, bundled().inventory),
            serialize_strategy(strategy_of({{"waf_rule", {{"rule", "sqli"}}}})));
}

TEST(ApplyGradient, CountsUpdates) {
  PolicyWeights w = random_weights(14);
  const Trajectory t = sample(w, 0, 24, 1.0, 1);
  const double before = logprob(w, 0, t.tokens).total;
  apply_gradient(w, grad_logprob(w, 0, t.tokens), 0.1);
  EXPECT_EQ(w.version, 1u);
  EXPECT_GT(logprob(w, 0, t.tokens).total, before);
}

TEST(Checkpoint, RoundTripIsExact) {
  PolicyWeights w = random_weights(15);
  w.version = 42;
  std::stringstream buf;
  save_checkpoint(w, buf);
  const PolicyWeights back = load_checkpoint(buf);
  EXPECT_EQ(back, w);
  std::stringstream again;
  save_checkpoint(back, again);
  EXPECT_EQ(again.str(), [&] {
    std::stringstream s;
    save_checkpoint(w, s);
    return s.str();
  }());
}

TEST(Checkpoint, PromptVersionMismatch) {
  PolicyWeights w = random_weights(16);
  w.prompt_format_version = kPromptFormatVersion + 1;
  std::stringstream buf;
  save_checkpoint(w, buf);
  EXPECT_THROW(load_checkpoint(buf), PromptFormatMismatch);
}

TEST(Checkpoint, CorruptInputs) {
  std::stringstream bad_magic("XXXX");
  EXPECT_THROW(load_checkpoint(bad_magic), CheckpointError);
  const PolicyWeights w = random_weights(17);
  std::stringstream buf;
  save_checkpoint(w, buf);
  const std::string full = buf.str();
  std::stringstream truncated(full.substr(0, full.size() - 3));
  EXPECT_THROW(load_checkpoint(truncated), CheckpointError);
  std::string nan_tail = full;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan_tail.data() + nan_tail.size() - 8, &nan, 8);
  std::stringstream non_finite(nan_tail);
  EXPECT_THROW(load_checkpoint(non_finite), CheckpointError);
}
