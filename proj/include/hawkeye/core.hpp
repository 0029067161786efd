#pragma once

// Shared domain types for the two-stage reasoning gateway: benchmark tasks,
// reasoning traces, token accounting, per-request results, and the
// think-marker splitter every mode relies on.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hawkeye {

/// Base class for every error this library throws.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace core {

enum class Dataset { GSM8K, MATH, MATH500, AIME, Custom };

inline std::string to_string(Dataset d) {
  switch (d) {
    case Dataset::GSM8K: return "gsm8k";
    case Dataset::MATH: return "math";
    case Dataset::MATH500: return "math500";
    case Dataset::AIME: return "aime";
    case Dataset::Custom: return "custom";
  }
  return "custom";
}

inline Dataset parse_dataset(std::string_view s) {
  if (s == "gsm8k" || s == "GSM8K") return Dataset::GSM8K;
  if (s == "math" || s == "MATH") return Dataset::MATH;
  if (s == "math500" || s == "MATH500") return Dataset::MATH500;
  if (s == "aime" || s == "AIME") return Dataset::AIME;
  return Dataset::Custom;
}

/// One benchmark item: question, normalized gold answer, dataset tag.
struct ReasoningTask {
  std::string id;
  std::string question;
  std::string gold_answer;
  Dataset dataset = Dataset::Custom;
};

enum class CoTSource { Thinker, Reference, Compressed };

inline std::string to_string(CoTSource s) {
  switch (s) {
    case CoTSource::Thinker: return "thinker";
    case CoTSource::Reference: return "reference";
    case CoTSource::Compressed: return "compressed";
  }
  return "thinker";
}

/// A reasoning chain with its token accounting. token_count is zero exactly
/// when the text is empty; use make_trace() to keep that invariant.
struct CoTTrace {
  std::string text;
  std::int64_t token_count = 0;
  CoTSource source = CoTSource::Thinker;
};

/// Prompt/completion token counts as reported by a backend (or estimated).
struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  std::int64_t total() const { return prompt_tokens + completion_tokens; }

  TokenUsage& operator+=(const TokenUsage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
  friend TokenUsage operator+(TokenUsage a, const TokenUsage& b) { return a += b; }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

inline TokenUsage merge(TokenUsage a, const TokenUsage& b) { return a + b; }

enum class PipelineMode { BaselineFull, HawkeyeFull, HawkeyeCotOnly };

inline std::string to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::BaselineFull: return "baseline_full";
    case PipelineMode::HawkeyeFull: return "hawkeye_full";
    case PipelineMode::HawkeyeCotOnly: return "hawkeye_cot_only";
  }
  return "baseline_full";
}

inline std::optional<PipelineMode> parse_mode(std::string_view s) {
  if (s == "baseline_full") return PipelineMode::BaselineFull;
  if (s == "hawkeye_full") return PipelineMode::HawkeyeFull;
  if (s == "hawkeye_cot_only") return PipelineMode::HawkeyeCotOnly;
  return std::nullopt;
}

using Clock = std::chrono::steady_clock;

/// Timing for one logical request. For a two-stage request this spans submit
/// of the first stage through the last token of the last stage. Gaps are the
/// consecutive differences of streamed token events, collected within each
/// stage (the stage boundary itself is not a token gap).
struct RequestTiming {
  Clock::time_point t_submit{};
  Clock::time_point t_first_token{};
  Clock::time_point t_last_token{};
  std::vector<double> inter_token_gaps_s;

  double time_to_last_token_s() const {
    return std::chrono::duration<double>(t_last_token - t_submit).count();
  }
  double time_to_first_token_s() const {
    return std::chrono::duration<double>(t_first_token - t_submit).count();
  }
};

/// Per-request record produced by the pipeline.
struct PipelineResult {
  std::string task_id;
  PipelineMode mode = PipelineMode::BaselineFull;
  CoTTrace cot;
  std::string response_text;
  std::optional<std::string> extracted_answer;
  std::map<std::string, TokenUsage> usage_by_stage;
  RequestTiming timing;
  bool empty_cot = false;
  bool failed = false;
  std::string error;

  TokenUsage total_usage() const {
    TokenUsage t;
    for (const auto& [_, u] : usage_by_stage) t += u;
    return t;
  }
};

// ---------------------------------------------------------------------------
// Think-marker parsing
// ---------------------------------------------------------------------------

struct ThinkSplit {
  std::string cot;
  std::string rest;
};

constexpr std::string_view kThinkOpen = "[Think]";
constexpr std::string_view kThinkClose = "[/Think]";

/// Splits raw model output into (cot, rest) around the first marker pair.
/// Total function: with no opening marker the whole input is `rest`; with an
/// unterminated opening marker everything after it is `cot`.
inline ThinkSplit split_think_markers(std::string_view text,
                                      std::string_view open = kThinkOpen,
                                      std::string_view close = kThinkClose) {
  const auto o = text.find(open);
  if (o == std::string_view::npos) return {std::string(), std::string(text)};
  const auto body_start = o + open.size();
  const auto c = text.find(close, body_start);
  if (c == std::string_view::npos) {
    return {std::string(text.substr(body_start)), std::string()};
  }
  return {std::string(text.substr(body_start, c - body_start)),
          std::string(text.substr(c + close.size()))};
}

// ---------------------------------------------------------------------------
// Token accounting
// ---------------------------------------------------------------------------

/// Fallback token estimate when a backend reports no usage: ceil(bytes / 4).
inline std::int64_t estimate_tokens(std::string_view text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

/// Deterministic token count. Prefers the backend-reported value when
/// present, regardless of the local byte length.
inline std::int64_t count_tokens(std::string_view text,
                                 std::optional<std::int64_t> reported = std::nullopt) {
  if (reported.has_value()) return *reported;
  return estimate_tokens(text);
}

/// Builds a CoTTrace that keeps `token_count == 0 iff text empty`.
inline CoTTrace make_trace(std::string text, CoTSource source,
                           std::optional<std::int64_t> reported = std::nullopt) {
  CoTTrace t;
  t.source = source;
  t.token_count = text.empty() ? 0 : count_tokens(text, reported);
  t.text = std::move(text);
  return t;
}

inline std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace core
}  // namespace hawkeye
