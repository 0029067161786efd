#pragma once

// Two-stage orchestration: the thinker produces a compact reasoning outline
// inside think-markers, the expander elaborates it into the final response.
// Baseline mode runs a single reasoning model end to end.

#include <optional>
#include <string>
#include <vector>

#include "hawkeye/backend.hpp"
#include "hawkeye/core.hpp"
#include "hawkeye/evalkit.hpp"

namespace hawkeye::pipeline {

using backend::BackendConfig;
using backend::ChatMessage;
using backend::ChatRequest;
using backend::ChatResponse;
using backend::Role;
using core::CoTTrace;
using core::PipelineMode;
using core::PipelineResult;
using core::ReasoningTask;
using core::TokenUsage;

inline constexpr const char* kDefaultThinkerTemplate =
    "You are a helpful and thoughtful math tutor. Work through the following problem step by "
    "step using clear reasoning and intermediate calculations, but do not give the final "
    "answer. Write only your reasoning, enclosed between [Think] and [/Think].\n\n"
    "Problem:\n\n{question}\n\nLet's think step by step.";

inline constexpr const char* kDefaultExpanderSystemPrompt =
    "You are a careful assistant that turns a reasoning outline into a complete answer. Follow "
    "the given reasoning faithfully, elaborate each step into a clear and well-formatted "
    "solution, and end with the final answer in \\boxed{}.";

inline constexpr const char* kDefaultExpanderUserTemplate =
    "Question:\n{question}\n\nReasoning outline:\n{cot}\n\nElaborate the outline into a "
    "complete solution and end with the final answer in \\boxed{}.";

inline constexpr const char* kDefaultBaselineTemplate =
    "Solve the following problem step by step and end with the final answer in \\boxed{}.\n\n"
    "Problem:\n\n{question}";

struct PipelineConfig {
  BackendConfig thinker;
  BackendConfig expander;
  std::string thinker_prompt_template = kDefaultThinkerTemplate;
  std::string expander_system_prompt = kDefaultExpanderSystemPrompt;
  std::string expander_user_template = kDefaultExpanderUserTemplate;
  std::string baseline_prompt_template = kDefaultBaselineTemplate;
  std::string think_open = std::string(core::kThinkOpen);
  std::string think_close = std::string(core::kThinkClose);
  double temperature = 0.0;
  bool stream = true;  // streaming gives per-token timing; content is identical
};

/// Replaces each `{name}` slot with its value. No other templating.
inline std::string render_template(
    std::string tmpl, const std::vector<std::pair<std::string, std::string>>& slots) {
  for (const auto& [name, value] : slots) {
    const std::string token = "{" + name + "}";
    if (auto pos = tmpl.find(token); pos != std::string::npos)
      tmpl.replace(pos, token.size(), value);
  }
  return tmpl;
}

inline int count_occurrences(const std::string& text, const std::string& token) {
  int n = 0;
  for (auto pos = text.find(token); pos != std::string::npos;
       pos = text.find(token, pos + token.size()))
    ++n;
  return n;
}

/// Each template must contain each of its required slots exactly once.
inline void validate_templates(const PipelineConfig& cfg) {
  auto require_once = [](const std::string& tmpl, const std::string& slot,
                         const std::string& which) {
    if (count_occurrences(tmpl, "{" + slot + "}") != 1)
      throw std::invalid_argument(which + " template must contain {" + slot + "} exactly once");
  };
  require_once(cfg.thinker_prompt_template, "question", "thinker");
  require_once(cfg.expander_user_template, "question", "expander");
  require_once(cfg.expander_user_template, "cot", "expander");
  require_once(cfg.baseline_prompt_template, "question", "baseline");
}

struct ThinkResult {
  CoTTrace cot;
  TokenUsage usage;
  std::string raw_text;
  bool empty_cot = false;  // thinker emitted no usable reasoning (non-fatal)
  std::vector<core::Clock::time_point> token_events;
};

struct ExpandResult {
  std::string text;
  TokenUsage usage;
  std::vector<core::Clock::time_point> token_events;
};

/// Stage one: ask the thinker for a reasoning outline and strip the markers.
inline ThinkResult think(const PipelineConfig& cfg, const std::string& question) {
  if (core::trim(question).empty()) throw std::invalid_argument("question must be non-empty");
  ChatRequest req;
  req.messages = {{Role::User, render_template(cfg.thinker_prompt_template,
                                               {{"question", question}})}};
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.thinker.default_max_tokens;
  req.stream = cfg.stream;

  ChatResponse resp = backend::send_chat(cfg.thinker, req);

  ThinkResult out;
  out.raw_text = resp.content;
  out.token_events = std::move(resp.token_events);
  if (resp.usage) out.usage = *resp.usage;
  auto split = core::split_think_markers(resp.content, cfg.think_open, cfg.think_close);
  std::string cot_text = core::trim(split.cot);
  out.empty_cot = cot_text.empty();
  std::optional<std::int64_t> reported;
  if (resp.usage) reported = resp.usage->completion_tokens;
  out.cot = core::make_trace(std::move(cot_text), core::CoTSource::Thinker, reported);
  if (!resp.usage) {
    out.usage.prompt_tokens = core::estimate_tokens(req.messages[0].content);
    out.usage.completion_tokens = core::estimate_tokens(out.raw_text);
  }
  return out;
}

/// Stage two: hand (question, outline) to the expander. The outline travels
/// verbatim; an empty outline is allowed and the expander answers unaided.
inline ExpandResult expand(const PipelineConfig& cfg, const std::string& question,
                           const CoTTrace& cot) {
  ChatRequest req;
  req.messages = {
      {Role::System, cfg.expander_system_prompt},
      {Role::User,
       render_template(cfg.expander_user_template, {{"question", question}, {"cot", cot.text}})}};
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.expander.default_max_tokens;
  req.stream = cfg.stream;

  ChatResponse resp = backend::send_chat(cfg.expander, req);
  ExpandResult out;
  out.text = std::move(resp.content);
  out.token_events = std::move(resp.token_events);
  if (resp.usage) {
    out.usage = *resp.usage;
  } else {
    out.usage.prompt_tokens = core::estimate_tokens(req.messages[1].content);
    out.usage.completion_tokens = core::estimate_tokens(out.text);
  }
  return out;
}

namespace detail {

inline void fold_events(core::RequestTiming& timing,
                        const std::vector<core::Clock::time_point>& events) {
  if (events.empty()) return;
  if (timing.t_first_token == core::Clock::time_point{}) timing.t_first_token = events.front();
  timing.t_last_token = events.back();
  for (size_t i = 1; i < events.size(); ++i)
    timing.inter_token_gaps_s.push_back(
        std::chrono::duration<double>(events[i] - events[i - 1]).count());
}

inline void close_timing(core::RequestTiming& timing) {
  const auto now = core::Clock::now();
  if (timing.t_first_token == core::Clock::time_point{}) timing.t_first_token = now;
  if (timing.t_last_token == core::Clock::time_point{}) timing.t_last_token = now;
  else if (timing.t_last_token < timing.t_first_token) timing.t_last_token = timing.t_first_token;
}

}  // namespace detail

/// Runs one task through the requested mode. Stage failures do not throw:
/// the result comes back with `failed` set so batch runs keep going.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const ReasoningTask& task,
                                   PipelineMode mode) {
  PipelineResult result;
  result.task_id = task.id;
  result.mode = mode;
  result.timing.t_submit = core::Clock::now();

  try {
    switch (mode) {
      case PipelineMode::BaselineFull: {
        ChatRequest req;
        req.messages = {{Role::User, render_template(cfg.baseline_prompt_template,
                                                     {{"question", task.question}})}};
        req.temperature = cfg.temperature;
        req.max_tokens = cfg.thinker.default_max_tokens;
        req.stream = cfg.stream;
        ChatResponse resp = backend::send_chat(cfg.thinker, req);
        detail::fold_events(result.timing, resp.token_events);
        // Keep the whole output; the think segment, if any, is the model's own.
        // Its token count is a local estimate since the backend only reports
        // whole-completion usage.
        auto split = core::split_think_markers(resp.content, cfg.think_open, cfg.think_close);
        TokenUsage usage;
        if (resp.usage) {
          usage = *resp.usage;
        } else {
          usage.prompt_tokens = core::estimate_tokens(req.messages[0].content);
          usage.completion_tokens = core::estimate_tokens(resp.content);
        }
        result.cot = core::make_trace(core::trim(split.cot), core::CoTSource::Thinker);
        result.response_text = std::move(resp.content);
        result.usage_by_stage["full"] = usage;
        break;
      }
      case PipelineMode::HawkeyeCotOnly: {
        ThinkResult t = think(cfg, task.question);
        detail::fold_events(result.timing, t.token_events);
        result.cot = std::move(t.cot);
        result.empty_cot = t.empty_cot;
        result.usage_by_stage["think"] = t.usage;
        break;
      }
      case PipelineMode::HawkeyeFull: {
        ThinkResult t = think(cfg, task.question);
        detail::fold_events(result.timing, t.token_events);
        result.cot = t.cot;
        result.empty_cot = t.empty_cot;
        result.usage_by_stage["think"] = t.usage;
        ExpandResult e = expand(cfg, task.question, t.cot);
        detail::fold_events(result.timing, e.token_events);
        result.response_text = std::move(e.text);
        result.usage_by_stage["expand"] = e.usage;
        break;
      }
    }
  } catch (const std::exception& ex) {
    result.failed = true;
    result.error = ex.what();
  }

  detail::close_timing(result.timing);
  if (!result.failed && mode != PipelineMode::HawkeyeCotOnly)
    result.extracted_answer = evalkit::extract_answer(result.response_text);
  return result;
}

}  // namespace hawkeye::pipeline
