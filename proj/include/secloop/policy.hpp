#pragma once

// Tabular autoregressive strategy generator.
//
// The next-token distribution is softmax(logits[context]) where the context
// is (prompt bucket, previous k tokens). Positions before the first token are
// padded with END, which can never precede a real token because generation
// stops at END. Log-probabilities and their gradients are exact.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "secloop/core.hpp"
#include "secloop/rng.hpp"
#include "secloop/summarizer.hpp"

namespace secloop {

class UnknownToken : public std::invalid_argument {
 public:
  explicit UnknownToken(std::size_t index)
      : std::invalid_argument("token index " + std::to_string(index) + " outside vocabulary") {}
};

// ---------------------------------------------------------------------------
// Vocabulary

enum TokenRole : std::uint8_t {
  kStructural = 0,
  kToolToken = 1,
  kValueToken = 2,
};

struct Vocabulary {
  static constexpr std::size_t kBegin = 0;
  static constexpr std::size_t kEnd = 1;
  static constexpr std::size_t kCallSep = 2;
  static constexpr std::size_t kParamSep = 3;

  std::vector<std::string> tokens;
  std::vector<std::uint8_t> roles;  // TokenRole bit set per token

  Vocabulary() {
    for (const char* s : {"<BEGIN>", "<END>", "<CALL_SEP>", "<PARAM_SEP>"}) {
      tokens.emplace_back(s);
      roles.push_back(kStructural);
    }
  }

  /// Structural tokens, then every tool name, then every parameter value, in
  /// first-appearance order across the inventories.
  static Vocabulary from_inventories(std::span<const std::vector<ToolSpec>* const> inventories) {
    Vocabulary v;
    for (const auto* inv : inventories) {
      for (const ToolSpec& t : *inv) v.add(t.name, kToolToken);
    }
    for (const auto* inv : inventories) {
      for (const ToolSpec& t : *inv) {
        for (const ParamSpec& p : t.params) {
          for (const std::string& value : p.values) v.add(value, kValueToken);
        }
      }
    }
    return v;
  }

  static Vocabulary from_inventory(const std::vector<ToolSpec>& inventory) {
    const std::vector<ToolSpec>* one[] = {&inventory};
    return from_inventories(one);
  }

  std::size_t size() const { return tokens.size(); }

  std::optional<std::size_t> index_of(std::string_view token) const {
    auto it = std::find(tokens.begin(), tokens.end(), token);
    if (it == tokens.end()) return std::nullopt;
    return static_cast<std::size_t>(it - tokens.begin());
  }

  bool is_tool(std::size_t i) const { return i < roles.size() && (roles[i] & kToolToken); }
  bool is_value(std::size_t i) const { return i < roles.size() && (roles[i] & kValueToken); }

  bool operator==(const Vocabulary&) const = default;

 private:
  void add(const std::string& token, TokenRole role) {
    if (auto i = index_of(token)) {
      if (roles[*i] == kStructural) throw std::invalid_argument("token clashes with " + token);
      roles[*i] |= role;
      return;
    }
    tokens.push_back(token);
    roles.push_back(role);
  }
};

// ---------------------------------------------------------------------------
// Weights

inline constexpr std::size_t kDefaultMarkovOrder = 2;
inline constexpr std::size_t kDefaultMaxLen = 24;
inline constexpr double kProbabilityFloor = 1e-12;

struct PolicyWeights {
  std::size_t buckets = kDefaultPromptBuckets;  // H
  std::size_t order = kDefaultMarkovOrder;      // k
  Vocabulary vocabulary;
  std::vector<double> logits;  // (H * V^k) rows of V entries, row-major
  std::uint64_t version = 0;   // number of updates applied
  std::uint32_t prompt_format_version = kPromptFormatVersion;

  PolicyWeights() = default;
  PolicyWeights(Vocabulary vocab, std::size_t h = kDefaultPromptBuckets,
                std::size_t k = kDefaultMarkovOrder)
      : buckets(h), order(k), vocabulary(std::move(vocab)) {
    if (buckets == 0) throw std::invalid_argument("bucket count must be >= 1");
    logits.assign(contexts() * vocab_size(), 0.0);
  }

  std::size_t vocab_size() const { return vocabulary.size(); }

  std::size_t contexts_per_bucket() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < order; ++i) n *= vocab_size();
    return n;
  }

  std::size_t contexts() const { return buckets * contexts_per_bucket(); }

  std::span<double> row(std::size_t context) {
    return {logits.data() + context * vocab_size(), vocab_size()};
  }
  std::span<const double> row(std::size_t context) const {
    return {logits.data() + context * vocab_size(), vocab_size()};
  }

  /// Context id of position t in `tokens`: the bucket and the k tokens
  /// preceding t, END-padded on the left.
  std::size_t context_at(std::size_t bucket, std::span<const std::size_t> tokens,
                         std::size_t t) const {
    std::size_t id = 0;
    for (std::size_t j = 0; j < order; ++j) {
      const std::size_t back = order - j;  // distance from t
      const std::size_t tok = t >= back ? tokens[t - back] : Vocabulary::kEnd;
      id = id * vocab_size() + tok;
    }
    return bucket * contexts_per_bucket() + id;
  }

  bool operator==(const PolicyWeights&) const = default;
};

inline std::vector<double> softmax(std::span<const double> row, double temperature = 1.0) {
  std::vector<double> p(row.size());
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    p[i] = std::exp((row[i] - mx) / temperature);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

inline double floored_log(double p) { return std::log(std::max(p, kProbabilityFloor)); }

// ---------------------------------------------------------------------------
// Sampling and scoring

struct Trajectory {
  std::size_t bucket = 0;  // prompt.context_hash
  std::vector<std::size_t> tokens;
  std::vector<double> per_token_logprob;
  double total_logprob = 0.0;
};

namespace detail {

inline void check_bucket(const PolicyWeights& w, std::size_t bucket) {
  if (bucket >= w.buckets) {
    throw std::invalid_argument("prompt bucket " + std::to_string(bucket) +
                                " outside weight table of " + std::to_string(w.buckets));
  }
}

inline void check_tokens(const PolicyWeights& w, std::span<const std::size_t> tokens) {
  for (std::size_t t : tokens) {
    if (t >= w.vocab_size()) throw UnknownToken(t);
  }
}

}  // namespace detail

/// Draws from softmax(logits / temperature) until END or max_len tokens.
/// The recorded log-probabilities are always under the temperature-1 policy.
inline Trajectory sample(const PolicyWeights& w, std::size_t bucket, std::size_t max_len,
                         double temperature, std::uint64_t rng_seed) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (max_len < 2) throw std::invalid_argument("max_len must be >= 2");
  detail::check_bucket(w, bucket);
  Rng rng(rng_seed);
  Trajectory traj;
  traj.bucket = bucket;
  while (traj.tokens.size() < max_len) {
    const auto row = w.row(w.context_at(bucket, traj.tokens, traj.tokens.size()));
    const std::vector<double> p = softmax(row);
    const std::vector<double> q = temperature == 1.0 ? p : softmax(row, temperature);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = q.size() - 1;
    for (std::size_t i = 0; i < q.size(); ++i) {
      acc += q[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    traj.tokens.push_back(pick);
    traj.per_token_logprob.push_back(floored_log(p[pick]));
    traj.total_logprob += traj.per_token_logprob.back();
    if (pick == Vocabulary::kEnd) break;
  }
  return traj;
}

inline Trajectory sample(const PolicyWeights& w, const Prompt& prompt, std::size_t max_len,
                         double temperature, std::uint64_t rng_seed) {
  return sample(w, prompt.context_hash, max_len, temperature, rng_seed);
}

/// Argmax decoding; ties go to the lowest token index.
inline Trajectory greedy(const PolicyWeights& w, std::size_t bucket, std::size_t max_len) {
  detail::check_bucket(w, bucket);
  Trajectory traj;
  traj.bucket = bucket;
  while (traj.tokens.size() < max_len) {
    const auto row = w.row(w.context_at(bucket, traj.tokens, traj.tokens.size()));
    const std::size_t pick =
        static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    traj.tokens.push_back(pick);
    traj.per_token_logprob.push_back(floored_log(softmax(row)[pick]));
    traj.total_logprob += traj.per_token_logprob.back();
    if (pick == Vocabulary::kEnd) break;
  }
  return traj;
}

struct LogProb {
  double total = 0.0;
  std::vector<double> per_token;
};

inline LogProb logprob(const PolicyWeights& w, std::size_t bucket,
                       std::span<const std::size_t> tokens) {
  detail::check_bucket(w, bucket);
  detail::check_tokens(w, tokens);
  LogProb out;
  out.per_token.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto p = softmax(w.row(w.context_at(bucket, tokens, t)));
    out.per_token.push_back(floored_log(p[tokens[t]]));
    out.total += out.per_token.back();
  }
  return out;
}

inline LogProb logprob(const PolicyWeights& w, const Prompt& prompt,
                       std::span<const std::size_t> tokens) {
  return logprob(w, prompt.context_hash, tokens);
}

/// Gradient restricted to visited contexts: context id -> row of V partials.
using SparseGrad = std::map<std::size_t, std::vector<double>>;

inline void add_scaled(SparseGrad& into, const SparseGrad& g, double scale) {
  for (const auto& [ctx, row] : g) {
    auto& dst = into[ctx];
    if (dst.empty()) dst.assign(row.size(), 0.0);
    for (std::size_t i = 0; i < row.size(); ++i) dst[i] += scale * row[i];
  }
}

inline double l2_norm(const SparseGrad& g) {
  double s = 0.0;
  for (const auto& [ctx, row] : g) {
    for (double x : row) s += x * x;
  }
  return std::sqrt(s);
}

/// d log pi(token_t | context_t) / d logits[context_t] = onehot - softmax.
/// Tokens whose probability sits below the log floor contribute nothing,
/// matching the flat floored log.
inline void accumulate_token_grad(const PolicyWeights& w, std::size_t context, std::size_t token,
                                  double scale, SparseGrad& into) {
  const auto p = softmax(w.row(context));
  if (p[token] < kProbabilityFloor) return;
  auto& dst = into[context];
  if (dst.empty()) dst.assign(w.vocab_size(), 0.0);
  for (std::size_t v = 0; v < p.size(); ++v) dst[v] -= scale * p[v];
  dst[token] += scale;
}

inline SparseGrad grad_logprob(const PolicyWeights& w, std::size_t bucket,
                               std::span<const std::size_t> tokens) {
  detail::check_bucket(w, bucket);
  detail::check_tokens(w, tokens);
  SparseGrad g;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    accumulate_token_grad(w, w.context_at(bucket, tokens, t), tokens[t], 1.0, g);
  }
  return g;
}

inline SparseGrad grad_logprob(const PolicyWeights& w, const Prompt& prompt,
                               std::span<const std::size_t> tokens) {
  return grad_logprob(w, prompt.context_hash, tokens);
}

inline void apply_gradient(PolicyWeights& w, const SparseGrad& g, double step) {
  for (const auto& [ctx, row] : g) {
    auto dst = w.row(ctx);
    for (std::size_t v = 0; v < row.size(); ++v) dst[v] += step * row[v];
  }
  ++w.version;
}

// ---------------------------------------------------------------------------
// Decoding

/// Grammar over tokens: BEGIN [call (CALL_SEP call)*] END, where
/// call = TOOL (PARAM_SEP VALUE)*. Values bind positionally to the tool's
/// schema. Any violation yields text that fails the format check.
inline std::string decode(std::span<const std::size_t> tokens, const Vocabulary& vocab,
                          const std::vector<ToolSpec>& inventory) {
  auto malformed = [&](std::size_t at, const char* why) {
    return "<malformed strategy at token " + std::to_string(at) + ": " + why + ">";
  };
  if (tokens.empty() || tokens[0] != Vocabulary::kBegin) return malformed(0, "missing BEGIN");
  SecurityStrategy s;
  std::size_t i = 1;
  if (i < tokens.size() && tokens[i] == Vocabulary::kEnd) {
    if (i + 1 != tokens.size()) return malformed(i + 1, "tokens after END");
    return serialize_strategy(s);
  }
  for (;;) {
    if (i >= tokens.size()) return malformed(i, "truncated before tool");
    if (!vocab.is_tool(tokens[i])) return malformed(i, "expected tool name");
    const std::string& tool = vocab.tokens[tokens[i]];
    ++i;
    std::vector<std::string> values;
    while (i < tokens.size() && tokens[i] == Vocabulary::kParamSep) {
      ++i;
      if (i >= tokens.size()) return malformed(i, "truncated after PARAM_SEP");
      if (!vocab.is_value(tokens[i])) return malformed(i, "expected parameter value");
      values.push_back(vocab.tokens[tokens[i]]);
      ++i;
    }
    ToolCall call{tool, {}};
    if (const ToolSpec* spec = find_tool(inventory, tool)) {
      if (values.size() != spec->params.size()) return malformed(i, "arity mismatch");
      for (std::size_t p = 0; p < values.size(); ++p) {
        call.params.emplace_back(spec->params[p].name, values[p]);
      }
    } else {
      // Not in this environment's inventory: keep it well-formed so it fails
      // at execution rather than at the format check.
      for (std::size_t p = 0; p < values.size(); ++p) {
        call.params.emplace_back("arg" + std::to_string(p), values[p]);
      }
    }
    s.calls.push_back(std::move(call));
    if (i >= tokens.size()) return malformed(i, "truncated before END");
    if (tokens[i] == Vocabulary::kEnd) {
      if (i + 1 != tokens.size()) return malformed(i + 1, "tokens after END");
      return serialize_strategy(s);
    }
    if (tokens[i] != Vocabulary::kCallSep) return malformed(i, "expected CALL_SEP or END");
    ++i;
  }
}

/// Token sequence that decodes to the given strategy; nullopt when a name or
/// value is missing from the vocabulary.
inline std::optional<std::vector<std::size_t>> encode(const SecurityStrategy& s,
                                                      const Vocabulary& vocab) {
  std::vector<std::size_t> out{Vocabulary::kBegin};
  for (std::size_t c = 0; c < s.calls.size(); ++c) {
    if (c > 0) out.push_back(Vocabulary::kCallSep);
    auto tool = vocab.index_of(s.calls[c].tool_name);
    if (!tool || !vocab.is_tool(*tool)) return std::nullopt;
    out.push_back(*tool);
    for (const auto& [name, value] : s.calls[c].params) {
      auto v = vocab.index_of(value);
      if (!v || !vocab.is_value(*v)) return std::nullopt;
      out.push_back(Vocabulary::kParamSep);
      out.push_back(*v);
    }
  }
  out.push_back(Vocabulary::kEnd);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "SLPW" | u32 format version | u32 prompt format version | u32 H | u32 k
//   | u64 update count | u32 V | V x (u32 byte length, bytes, u8 role)
//   | H*V^k*V little-endian IEEE-754 doubles, row-major

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PromptFormatMismatch : public CheckpointError {
 public:
  explicit PromptFormatMismatch(std::uint32_t found)
      : CheckpointError("checkpoint prompt format version " + std::to_string(found) +
                        " != current " + std::to_string(kPromptFormatVersion)) {}
};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw CheckpointError("truncated checkpoint");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace detail

inline void save_checkpoint(const PolicyWeights& w, std::ostream& out) {
  out.write("SLPW", 4);
  detail::put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  detail::put_le<std::uint32_t>(out, w.prompt_format_version);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.buckets));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.order));
  detail::put_le<std::uint64_t>(out, w.version);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.vocab_size()));
  for (std::size_t i = 0; i < w.vocab_size(); ++i) {
    const std::string& tok = w.vocabulary.tokens[i];
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tok.size()));
    out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
    detail::put_le<std::uint8_t>(out, w.vocabulary.roles[i]);
  }
  for (double x : w.logits) detail::put_le<double>(out, x);
  if (!out) throw CheckpointError("failed writing checkpoint");
}

inline PolicyWeights load_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SLPW", 4) != 0) {
    throw CheckpointError("not a policy checkpoint (bad magic)");
  }
  const auto format = detail::get_le<std::uint32_t>(in);
  if (format != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format " + std::to_string(format));
  }
  const auto prompt_version = detail::get_le<std::uint32_t>(in);
  if (prompt_version != kPromptFormatVersion) throw PromptFormatMismatch(prompt_version);

  PolicyWeights w;
  w.prompt_format_version = prompt_version;
  w.buckets = detail::get_le<std::uint32_t>(in);
  w.order = detail::get_le<std::uint32_t>(in);
  w.version = detail::get_le<std::uint64_t>(in);
  const auto v = detail::get_le<std::uint32_t>(in);
  if (w.buckets == 0 || v < 4) throw CheckpointError("corrupt checkpoint header");
  w.vocabulary.tokens.clear();
  w.vocabulary.roles.clear();
  for (std::uint32_t i = 0; i < v; ++i) {
    const auto len = detail::get_le<std::uint32_t>(in);
    if (len > 4096) throw CheckpointError("corrupt vocabulary entry");
    std::string tok(len, '\0');
    if (!in.read(tok.data(), len)) throw CheckpointError("truncated checkpoint");
    w.vocabulary.tokens.push_back(std::move(tok));
    w.vocabulary.roles.push_back(detail::get_le<std::uint8_t>(in));
  }
  if (w.vocabulary.tokens[Vocabulary::kBegin] != "<BEGIN>" ||
      w.vocabulary.tokens[Vocabulary::kEnd] != "<END>") {
    throw CheckpointError("vocabulary does not start with BEGIN, END");
  }
  w.logits.resize(w.contexts() * w.vocab_size());
  for (double& x : w.logits) {
    x = detail::get_le<double>(in);
    if (!std::isfinite(x)) throw CheckpointError("non-finite logit");
  }
  return w;
}

}  // namespace secloop
