#pragma once

// Answer extraction and exact-match scoring, plus the LLM-as-judge protocol
// with a five-dimension rubric and structured JSON replies.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "hawkeye/backend.hpp"
#include "hawkeye/core.hpp"

namespace hawkeye::evalkit {

// ---------------------------------------------------------------------------
// Normalization and extraction
// ---------------------------------------------------------------------------

namespace detail {

/// Replaces the Unicode minus sign with ASCII '-'.
inline std::string ascii_minus(std::string s) {
  const std::string uminus = "\xE2\x88\x92";  // U+2212
  for (auto pos = s.find(uminus); pos != std::string::npos; pos = s.find(uminus, pos))
    s.replace(pos, uminus.size(), "-");
  return s;
}

inline bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

/// "007" -> "7", "-05" -> "-5"; leaves non-integers alone.
inline std::string strip_leading_zeros(std::string s) {
  std::string sign;
  std::string_view digits = s;
  if (!digits.empty() && (digits[0] == '-')) {
    sign = "-";
    digits.remove_prefix(1);
  }
  if (!all_digits(digits)) return s;
  size_t i = 0;
  while (i + 1 < digits.size() && digits[i] == '0') ++i;
  return sign + std::string(digits.substr(i));
}

/// If `s` is exactly \frac{A}{B} (or \dfrac/\tfrac), returns "A/B".
inline std::optional<std::string> fold_frac(const std::string& s) {
  for (const char* name : {"\\dfrac", "\\tfrac", "\\frac"}) {
    const std::string prefix = std::string(name) + "{";
    if (s.rfind(prefix, 0) != 0) continue;
    size_t i = prefix.size();
    int depth = 1;
    std::string num;
    for (; i < s.size() && depth > 0; ++i) {
      if (s[i] == '{') ++depth;
      if (s[i] == '}') {
        if (--depth == 0) break;
      }
      if (depth > 0) num += s[i];
    }
    if (i >= s.size() || i + 1 >= s.size() || s[i + 1] != '{') continue;
    size_t j = i + 2;
    depth = 1;
    std::string den;
    for (; j < s.size() && depth > 0; ++j) {
      if (s[j] == '{') ++depth;
      if (s[j] == '}') {
        if (--depth == 0) break;
      }
      if (depth > 0) den += s[j];
    }
    if (depth == 0 && j == s.size() - 1) return num + "/" + den;
  }
  return std::nullopt;
}

}  // namespace detail

/// Canonical answer form: no whitespace, LaTeX fractions folded to a/b,
/// currency/percent signs and thousands separators dropped, leading '+' and
/// leading zeros stripped.
inline std::string normalize_answer(std::string_view raw) {
  std::string s = detail::ascii_minus(core::trim(raw));
  // remove all whitespace
  std::string compact;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
  s = std::move(compact);
  if (auto frac = detail::fold_frac(s)) s = *frac;
  // strip \$ . $, \% and %
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && (s[i + 1] == '$' || s[i + 1] == '%')) {
      ++i;
      continue;
    }
    if (s[i] == '$' || s[i] == '%') continue;
    out += s[i];
  }
  s = std::move(out);
  // thousands separators: drop commas flanked by digits
  out.clear();
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && i + 1 < s.size() &&
        std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
        std::isdigit(static_cast<unsigned char>(s[i + 1])))
      continue;
    out += s[i];
  }
  s = std::move(out);
  if (!s.empty() && s[0] == '+') s.erase(0, 1);
  if (auto frac = detail::fold_frac(s)) s = *frac;
  // canonicalize integers (possibly on each side of a fraction)
  if (auto slash = s.find('/'); slash != std::string::npos) {
    s = detail::strip_leading_zeros(s.substr(0, slash)) + "/" +
        detail::strip_leading_zeros(s.substr(slash + 1));
  } else {
    s = detail::strip_leading_zeros(s);
  }
  return s;
}

namespace detail {

inline std::optional<std::string> last_boxed(const std::string& text) {
  const std::string kBoxed = "\\boxed{";
  std::optional<std::string> found;
  for (auto pos = text.find(kBoxed); pos != std::string::npos;
       pos = text.find(kBoxed, pos + 1)) {
    size_t i = pos + kBoxed.size();
    int depth = 1;
    std::string inner;
    for (; i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}' && --depth == 0) break;
      inner += text[i];
    }
    if (depth == 0) found = inner;
  }
  return found;
}

inline std::optional<std::string> last_hash_line(const std::string& text) {
  std::optional<std::string> found;
  size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = core::trim(std::string_view(text).substr(start, end - start));
    if (line.rfind("####", 0) == 0) {
      std::string value = core::trim(line.substr(4));
      if (!value.empty()) found = value;
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return found;
}

inline std::optional<std::string> last_number_in_final_line(const std::string& text) {
  // final non-empty line
  size_t end = text.size();
  while (end > 0) {
    size_t start = text.rfind('\n', end - 1);
    const size_t line_begin = (start == std::string::npos) ? 0 : start + 1;
    std::string line = core::trim(std::string_view(text).substr(line_begin, end - line_begin));
    if (!line.empty()) {
      std::optional<std::string> best;
      for (size_t i = 0; i < line.size(); ++i) {
        const bool sign = (line[i] == '-' || line[i] == '+') && i + 1 < line.size() &&
                          std::isdigit(static_cast<unsigned char>(line[i + 1]));
        if (!sign && !std::isdigit(static_cast<unsigned char>(line[i]))) continue;
        size_t j = i;
        if (sign) ++j;
        while (j < line.size() &&
               (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.' ||
                line[j] == ',' || line[j] == '/'))
          ++j;
        std::string token = line.substr(i, j - i);
        while (!token.empty() && (token.back() == '.' || token.back() == ',' || token.back() == '/'))
          token.pop_back();
        if (!token.empty()) best = token;
        i = j;
      }
      if (best) return best;
      return std::nullopt;
    }
    if (start == std::string::npos) break;
    end = start;
  }
  return std::nullopt;
}

}  // namespace detail

/// Pulls a final answer out of model text. Tries, in order: the last balanced
/// \boxed{...}, the last `#### value` line, the last number in the final
/// line. Returns the normalized form, or nothing.
inline std::optional<std::string> extract_answer(const std::string& text) {
  std::string prepared = detail::ascii_minus(text);
  if (auto boxed = detail::last_boxed(prepared)) return normalize_answer(*boxed);
  if (auto hash = detail::last_hash_line(prepared)) return normalize_answer(*hash);
  if (auto num = detail::last_number_in_final_line(prepared)) return normalize_answer(*num);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Exact match
// ---------------------------------------------------------------------------

enum class MatchMode { Strict, Numeric };

namespace detail {

inline std::optional<double> parse_value(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (auto slash = s.find('/'); slash != std::string::npos) {
    try {
      size_t na = 0, nb = 0;
      const std::string a = s.substr(0, slash), b = s.substr(slash + 1);
      const double num = std::stod(a, &na);
      const double den = std::stod(b, &nb);
      if (na != a.size() || nb != b.size() || den == 0.0) return std::nullopt;
      return num / den;
    } catch (...) {
      return std::nullopt;
    }
  }
  try {
    size_t n = 0;
    const double v = std::stod(s, &n);
    if (n != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

/// Rounds to 9 significant digits via scientific formatting.
inline std::string sig9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.8e", v);
  return buf;
}

}  // namespace detail

/// 1 iff the normalized strings are byte-equal. Numeric mode additionally
/// equates values whose decimal/rational forms agree to 9 significant digits.
inline int exact_match(const std::string& pred, const std::string& gold,
                       MatchMode mode = MatchMode::Strict) {
  const std::string p = normalize_answer(pred);
  const std::string g = normalize_answer(gold);
  if (p == g) return 1;
  if (mode == MatchMode::Numeric) {
    const auto pv = detail::parse_value(p);
    const auto gv = detail::parse_value(g);
    if (pv && gv && detail::sig9(*pv) == detail::sig9(*gv)) return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// LLM-as-judge
// ---------------------------------------------------------------------------

struct JudgeScores {
  int clarity = 0;
  int completeness = 0;
  int coherence = 0;
  int correctness = 0;
  int conciseness = 0;
};

class JudgeFormatError : public Error {
public:
  using Error::Error;
};

struct JudgeResult {
  JudgeScores scores;
  std::string prompt;     // full prompt sent, persisted for audit
  std::string raw_reply;  // judge's final raw reply
  bool re_asked = false;
};

inline constexpr const char* kJudgeRubric =
    "You are given a response to a specific math problem. Your task is to evaluate the response "
    "based on the following five criteria: clarity, completeness, coherence, correctness, and "
    "conciseness. Provide a score for each dimension based on the standards outlined below:\n\n"
    "1. Clarity (1-5):\n"
    "   - Does the response clearly explain each step of the reasoning?\n"
    "   - Is the language used straightforward and easy to understand?\n"
    "   - A score of 5 means the explanation is exceptionally clear with no ambiguity, while 1 "
    "means it is very difficult to follow.\n\n"
    "2. Completeness (1-5):\n"
    "   - Does the response address all parts of the question?\n"
    "   - Does it include all necessary calculations and intermediate steps?\n"
    "   - A score of 5 means the response covers all required steps and details, while 1 means "
    "critical parts of the problem are missing.\n\n"
    "3. Coherence (1-5):\n"
    "   - Are the steps and reasoning logically connected?\n"
    "   - Does the response flow smoothly from one step to the next without any sudden jumps "
    "or gaps in logic?\n"
    "   - A score of 5 means the response is well-structured and the reasoning is seamlessly "
    "connected, while 1 means the explanation is disjointed and hard to follow.\n\n"
    "4. Correctness (1-5):\n"
    "   - Does the reasoning lead to the correct result?\n"
    "   - Are the intermediate steps logically sound and consistent with the problem "
    "statement?\n"
    "   - A score of 5 means the solution is correct and matches the question exactly, while 1 "
    "means there are significant errors in reasoning or calculation.\n\n"
    "5. Conciseness (1-5):\n"
    "   - Does the response avoid unnecessary information or repetition?\n"
    "   - Is it efficient without sacrificing important details?\n"
    "   - A score of 5 means the response is brief yet thorough, while 1 means it includes "
    "excessive or irrelevant information.\n\n"
    "Provide your evaluation below, giving a score from 1 to 5 for each criterion and "
    "explaining your reasoning behind the scores.";

inline constexpr const char* kJudgeJsonInstruction =
    "After your evaluation, reply with a single JSON object containing exactly the integer "
    "keys \"clarity\", \"completeness\", \"coherence\", \"correctness\" and \"conciseness\", "
    "each scored from 1 to 5.";

namespace detail {

/// Extracts the last balanced top-level {...} block, if any.
inline std::optional<std::string> last_json_object(const std::string& text) {
  std::optional<std::string> found;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    int depth = 0;
    bool in_string = false;
    for (size_t j = i; j < text.size(); ++j) {
      const char c = text[j];
      if (in_string) {
        if (c == '\\') ++j;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        found = text.substr(i, j - i + 1);
        i = j;
        break;
      }
    }
  }
  return found;
}

inline std::optional<JudgeScores> parse_scores(const std::string& reply) {
  const auto obj = last_json_object(reply);
  if (!obj) return std::nullopt;
  const auto parsed = nlohmann::json::parse(*obj, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  JudgeScores s;
  struct Field {
    const char* key;
    int* slot;
  };
  const Field fields[] = {{"clarity", &s.clarity},
                          {"completeness", &s.completeness},
                          {"coherence", &s.coherence},
                          {"correctness", &s.correctness},
                          {"conciseness", &s.conciseness}};
  for (const auto& f : fields) {
    if (!parsed.contains(f.key) || !parsed[f.key].is_number_integer()) return std::nullopt;
    const int v = parsed[f.key].get<int>();
    if (v < 1 || v > 5) return std::nullopt;
    *f.slot = v;
  }
  return s;
}

}  // namespace detail

/// Scores one response with the rubric. Retries once with a stricter
/// instruction when the reply cannot be parsed or is out of range.
inline JudgeResult judge(const std::string& question, const std::string& response,
                         const backend::BackendConfig& judge_backend) {
  const std::string prompt = std::string(kJudgeRubric) + "\n\nProblem:\n" + question +
                             "\n\nResponse:\n" + response + "\n\n" + kJudgeJsonInstruction;

  backend::ChatRequest req;
  req.messages = {{backend::Role::User, prompt}};
  req.temperature = 0.0;
  req.max_tokens = judge_backend.default_max_tokens;
  req.stream = false;

  JudgeResult result;
  result.prompt = prompt;

  backend::ChatResponse first = backend::complete(judge_backend, req);
  result.raw_reply = first.content;
  if (auto scores = detail::parse_scores(first.content)) {
    result.scores = *scores;
    return result;
  }

  result.re_asked = true;
  req.messages.push_back({backend::Role::Assistant, first.content});
  req.messages.push_back(
      {backend::Role::User,
       "Your previous reply could not be parsed. Reply with ONLY the JSON object, with each of "
       "the five scores an integer from 1 to 5."});
  backend::ChatResponse second = backend::complete(judge_backend, req);
  result.raw_reply = second.content;
  if (auto scores = detail::parse_scores(second.content)) {
    result.scores = *scores;
    return result;
  }
  throw JudgeFormatError("judge reply unparseable after re-ask: " +
                         backend::detail::excerpt(second.content));
}

}  // namespace hawkeye::evalkit
