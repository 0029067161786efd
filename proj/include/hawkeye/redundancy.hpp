#pragma once

// The redundancy experiment: take reference reasoning chains, ask a
// compressor model to shrink them to target ratios, replay the compressed
// chains through a weak responder, and measure accuracy vs. achieved
// compression rate.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "hawkeye/backend.hpp"
#include "hawkeye/core.hpp"
#include "hawkeye/evalkit.hpp"
#include "hawkeye/pipeline.hpp"

namespace hawkeye::redundancy {

using core::CoTTrace;
using core::ReasoningTask;

struct CompressionLevel {
  double target_ratio = 1.0;
};

inline std::vector<CompressionLevel> default_levels() {
  return {{0.8}, {0.6}, {0.4}, {0.3}, {0.2}, {0.1}};
}

struct SweepPoint {
  double target_ratio = 0.0;
  double achieved_rate = 0.0;  // mean remaining/original tokens over tasks
  double accuracy = 0.0;
  int n = 0;
  int over_target = 0;  // tasks whose compressed chain came back longer than the original
  int failures = 0;     // counted as incorrect, never aborting the sweep
};

inline constexpr const char* kGenerationPromptTemplate =
    "You are a helpful and thoughtful math tutor. Carefully work through the following problem "
    "step by step using clear reasoning and intermediate calculations. Explain your logic "
    "thoroughly, but do not give the final answer.\n\n"
    "Problem:\n\n{problem}\n\nLet's think step by step.";

inline constexpr const char* kRevisionPromptTemplate =
    "You are given a detailed step-by-step reasoning (Chain-of-Thought) for solving a problem. "
    "Your task is to revise the explanation while keeping approximately {ratio}% of the "
    "original tokens unchanged. Make light edits for clarity or style if needed, but preserve "
    "the overall structure, meaning, and majority of the wording. Do not shorten or skip "
    "steps.\n\n"
    "The key requirement is to retain the most important information in the original "
    "reasoning, ensuring that the core logic and steps are preserved.\n\n"
    "Original CoT:\n{cot}\n\nRevised CoT:";

/// Prompt asking a model for a full reasoning chain, final answer withheld.
inline std::string build_generation_prompt(const std::string& problem) {
  if (core::trim(problem).empty()) throw std::invalid_argument("problem must be non-empty");
  return pipeline::render_template(kGenerationPromptTemplate, {{"problem", problem}});
}

/// Prompt asking a model to compress a chain to the target ratio, given as a
/// percentage ("0.6" -> "60%").
inline std::string build_compression_prompt(const std::string& cot, CompressionLevel level) {
  if (core::trim(cot).empty()) throw std::invalid_argument("cot must be non-empty");
  char pct[32];
  std::snprintf(pct, sizeof pct, "%g", level.target_ratio * 100.0);
  return pipeline::render_template(kRevisionPromptTemplate, {{"ratio", pct}, {"cot", cot}});
}

class ZeroOriginal : public Error {
public:
  using Error::Error;
};

/// remaining / original token count. May exceed 1 when the compressor grew
/// the chain; callers flag that in the report rather than clamping.
inline double compression_rate(const CoTTrace& original, const CoTTrace& compressed) {
  if (original.token_count == 0) throw ZeroOriginal("original trace has zero tokens");
  return static_cast<double>(compressed.token_count) /
         static_cast<double>(original.token_count);
}

struct SweepConfig {
  backend::BackendConfig compressor;
  backend::BackendConfig responder;
  std::string expander_system_prompt = pipeline::kDefaultExpanderSystemPrompt;
  std::string expander_user_template = pipeline::kDefaultExpanderUserTemplate;
  evalkit::MatchMode match_mode = evalkit::MatchMode::Strict;
  int concurrency_width = 4;  // tasks in flight within one level
  bool stream = false;
};

namespace detail {

struct TaskOutcome {
  double rate = 0.0;
  int correct = 0;
  bool over_target = false;
  bool failed = false;
};

inline TaskOutcome run_one(const SweepConfig& cfg, const ReasoningTask& task,
                           const CoTTrace& reference, CompressionLevel level) {
  TaskOutcome out;
  try {
    backend::ChatRequest creq;
    creq.messages = {
        {backend::Role::User, build_compression_prompt(reference.text, level)}};
    creq.temperature = 0.0;
    creq.max_tokens = cfg.compressor.default_max_tokens;
    creq.stream = cfg.stream;
    backend::ChatResponse cresp = backend::send_chat(cfg.compressor, creq);

    std::optional<std::int64_t> reported;
    if (cresp.usage) reported = cresp.usage->completion_tokens;
    CoTTrace compressed =
        core::make_trace(core::trim(cresp.content), core::CoTSource::Compressed, reported);

    out.rate = compression_rate(reference, compressed);
    out.over_target = out.rate > 1.0;

    pipeline::PipelineConfig pcfg;
    pcfg.expander = cfg.responder;
    pcfg.expander_system_prompt = cfg.expander_system_prompt;
    pcfg.expander_user_template = cfg.expander_user_template;
    pcfg.stream = cfg.stream;
    pipeline::ExpandResult answer = pipeline::expand(pcfg, task.question, compressed);

    auto extracted = evalkit::extract_answer(answer.text);
    if (extracted)
      out.correct = evalkit::exact_match(*extracted, task.gold_answer, cfg.match_mode);
  } catch (const std::exception&) {
    out.failed = true;  // counted as incorrect; rate contributes nothing below
  }
  return out;
}

}  // namespace detail

/// Runs the full sweep. Levels run sequentially; tasks within a level run
/// concurrently up to the configured width. Failures count as incorrect and
/// never abort the sweep, so every point covers all tasks.
inline std::vector<SweepPoint> run_sweep(const std::vector<ReasoningTask>& tasks,
                                         const std::map<std::string, CoTTrace>& references,
                                         const std::vector<CompressionLevel>& levels,
                                         const SweepConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("sweep needs at least one task");

  std::vector<SweepPoint> curve;
  curve.reserve(levels.size());
  for (const auto& level : levels) {
    std::vector<detail::TaskOutcome> outcomes(tasks.size());
    std::atomic<size_t> next{0};
    const int width = std::max(1, cfg.concurrency_width);
    auto worker = [&] {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        const auto ref = references.find(tasks[i].id);
        if (ref == references.end() || ref->second.token_count == 0) {
          outcomes[i].failed = true;
          continue;
        }
        outcomes[i] = detail::run_one(cfg, tasks[i], ref->second, level);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    SweepPoint point;
    point.target_ratio = level.target_ratio;
    point.n = static_cast<int>(tasks.size());
    double rate_sum = 0.0;
    int rated = 0;
    int correct = 0;
    for (const auto& o : outcomes) {
      if (o.failed) {
        ++point.failures;
        continue;
      }
      rate_sum += o.rate;
      ++rated;
      correct += o.correct;
      if (o.over_target) ++point.over_target;
    }
    point.achieved_rate = rated > 0 ? rate_sum / rated : 0.0;
    point.accuracy = static_cast<double>(correct) / static_cast<double>(tasks.size());
    curve.push_back(point);
  }
  return curve;
}

inline void write_curve_csv(std::ostream& os, const std::vector<SweepPoint>& curve) {
  os << "target_ratio,achieved_rate,accuracy,n,over_target,failures\n";
  char buf[160];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%g,%g,%g,%d,%d,%d\n", p.target_ratio, p.achieved_rate,
                  p.accuracy, p.n, p.over_target, p.failures);
    os << buf;
  }
}

}  // namespace hawkeye::redundancy
