#pragma once

// Canonical strategy text:
//
//   {"tool_calls": [{"tool": NAME, "params": {"P": "V", ...}}, ...]}
//
// Separators are exactly ", " and ": "; no other whitespace. Every name and
// value is a non-empty run of [A-Za-z0-9_.:/-], so no escaping ever occurs
// and the whole language is regular.

#include <regex>
#include <string>
#include <string_view>
#include <variant>

#include "secloop/core.hpp"

namespace secloop {

inline bool is_token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c == '.' || c == ':' || c == '/' || c == '-';
}

inline bool is_canonical_token(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), is_token_char);
}

inline std::string serialize_strategy(const SecurityStrategy& strategy) {
  std::string out = R"({"tool_calls": [)";
  for (std::size_t i = 0; i < strategy.calls.size(); ++i) {
    const ToolCall& call = strategy.calls[i];
    if (i > 0) out += ", ";
    out += R"({"tool": ")";
    out += call.tool_name;
    out += R"(", "params": {)";
    for (std::size_t j = 0; j < call.params.size(); ++j) {
      if (j > 0) out += ", ";
      out += '"';
      out += call.params[j].first;
      out += R"(": ")";
      out += call.params[j].second;
      out += '"';
    }
    out += "}}";
  }
  out += "]}";
  return out;
}

namespace detail {

class StrategyParser {
 public:
  explicit StrategyParser(std::string_view text) : text_(text) {}

  std::variant<SecurityStrategy, FormatError> run() {
    SecurityStrategy s;
    if (!literal(R"({"tool_calls": [)")) return error_;
    if (!peek(']')) {
      for (;;) {
        ToolCall call;
        if (!parse_call(call)) return error_;
        s.calls.push_back(std::move(call));
        if (peek(']')) break;
        if (!literal(", ")) return error_;
      }
    }
    if (!literal("]}")) return error_;
    if (pos_ != text_.size()) {
      fail("trailing characters after strategy");
      return error_;
    }
    s.raw_text = std::string(text_);
    return s;
  }

 private:
  bool parse_call(ToolCall& call) {
    if (!literal(R"({"tool": )")) return false;
    if (!quoted(call.tool_name)) return false;
    if (!literal(R"(, "params": {)")) return false;
    if (!peek('}')) {
      for (;;) {
        ParamBinding b;
        if (!quoted(b.first)) return false;
        if (!literal(": ")) return false;
        if (!quoted(b.second)) return false;
        call.params.push_back(std::move(b));
        if (peek('}')) break;
        if (!literal(", ")) return false;
      }
    }
    return literal("}}");
  }

  bool quoted(std::string& out) {
    if (!literal("\"")) return false;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_token_char(text_[pos_])) ++pos_;
    if (pos_ == start) return fail("expected token");
    out = std::string(text_.substr(start, pos_ - start));
    return literal("\"");
  }

  bool peek(char c) const { return pos_ < text_.size() && text_[pos_] == c; }

  bool literal(std::string_view lit) {
    for (std::size_t i = 0; i < lit.size(); ++i) {
      if (pos_ + i >= text_.size()) {
        pos_ = text_.size();
        return fail("unexpected end of input");
      }
      if (text_[pos_ + i] != lit[i]) {
        pos_ += i;
        return fail("expected '" + std::string(lit.substr(i)) + "'");
      }
    }
    pos_ += lit.size();
    return true;
  }

  bool fail(std::string message) {
    error_ = FormatError{pos_, std::move(message)};
    return false;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  FormatError error_;
};

}  // namespace detail

/// Parses canonical strategy text. On failure the error carries the offset of
/// the first violation.
inline std::variant<SecurityStrategy, FormatError> parse_strategy(std::string_view text) {
  return detail::StrategyParser(text).run();
}

/// The canonical grammar as a single regular expression.
inline const std::regex& canonical_strategy_regex() {
  static const std::regex re = [] {
    const std::string tok = R"("[A-Za-z0-9_.:/\-]+")";
    const std::string pair = tok + ": " + tok;
    const std::string params = R"(\{(?:)" + pair + "(?:, " + pair + R"()*)?\})";
    const std::string call = R"(\{"tool": )" + tok + R"(, "params": )" + params + R"(\})";
    return std::regex(R"(^\{"tool_calls": \[(?:)" + call + "(?:, " + call + R"()*)?\]\}$)",
                      std::regex::ECMAScript | std::regex::optimize);
  }();
  return re;
}

}  // namespace secloop
