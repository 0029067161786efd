#pragma once

// Operator-facing configuration and file I/O: run configs, JSONL dataset
// ingestion, reference-chain caches, result serialization, atomic writes,
// and the per-run manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hawkeye/backend.hpp"
#include "hawkeye/core.hpp"
#include "hawkeye/evalkit.hpp"
#include "hawkeye/pipeline.hpp"
#include "hawkeye/rewardlab.hpp"

namespace hawkeye::config {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

class ParseError : public Error {
public:
  ParseError(const std::string& what, int line)
      : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
  int line;
};

class DuplicateId : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Dataset ingestion
// ---------------------------------------------------------------------------

/// Pulls the gold answer out of a raw dataset answer field: GSM8K-style
/// `#### value` trailers and boxed solutions are unwrapped, everything is
/// normalized with the evaluator's rules.
inline std::string normalize_gold(const std::string& raw_answer) {
  if (auto extracted = evalkit::extract_answer(raw_answer)) return *extracted;
  return evalkit::normalize_answer(raw_answer);
}

/// Reads a JSONL dataset: one {"id", "question", "answer"} object per line,
/// optional "dataset" tag.
inline std::vector<core::ReasoningTask> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset: " + path);
  std::vector<core::ReasoningTask> tasks;
  std::map<std::string, int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (core::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("malformed JSON", line_no);
    if (!j.contains("id") || !j["id"].is_string()) throw ParseError("missing \"id\"", line_no);
    if (!j.contains("question") || !j["question"].is_string())
      throw ParseError("missing \"question\"", line_no);
    if (!j.contains("answer") || !j["answer"].is_string())
      throw ParseError("missing \"answer\"", line_no);

    core::ReasoningTask task;
    task.id = j["id"].get<std::string>();
    task.question = j["question"].get<std::string>();
    task.gold_answer = normalize_gold(j["answer"].get<std::string>());
    task.dataset = core::parse_dataset(j.value("dataset", std::string("custom")));
    if (task.question.empty()) throw ParseError("empty question", line_no);
    if (task.gold_answer.empty()) throw ParseError("empty answer", line_no);
    if (auto [it, inserted] = seen.emplace(task.id, line_no); !inserted)
      throw DuplicateId("duplicate task id \"" + task.id + "\" at line " +
                        std::to_string(line_no) + " (first seen at line " +
                        std::to_string(it->second) + ")");
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// Reference-chain cache (JSONL: task_id, cot_text, token_count)
// ---------------------------------------------------------------------------

inline std::map<std::string, core::CoTTrace> load_reference_cots(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open reference file: " + path);
  std::map<std::string, core::CoTTrace> refs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (core::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("task_id") || !j.contains("cot_text"))
      throw ParseError("malformed reference record", line_no);
    std::string text = j["cot_text"].get<std::string>();
    std::optional<std::int64_t> reported;
    if (j.contains("token_count")) reported = j["token_count"].get<std::int64_t>();
    refs[j["task_id"].get<std::string>()] =
        core::make_trace(std::move(text), core::CoTSource::Reference, reported);
  }
  return refs;
}

inline void save_reference_cots(std::ostream& os,
                                const std::map<std::string, core::CoTTrace>& refs) {
  for (const auto& [id, trace] : refs) {
    json j = {{"task_id", id}, {"cot_text", trace.text}, {"token_count", trace.token_count}};
    os << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Backend / run configuration
// ---------------------------------------------------------------------------

inline backend::BackendConfig backend_from_json(const json& j) {
  backend::BackendConfig cfg;
  cfg.base_url = j.value("base_url", cfg.base_url);
  cfg.model_name = j.value("model_name", cfg.model_name);
  cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
  cfg.request_timeout_ms = j.value("request_timeout_ms", cfg.request_timeout_ms);
  cfg.max_retries = j.value("max_retries", cfg.max_retries);
  cfg.default_temperature = j.value("default_temperature", cfg.default_temperature);
  cfg.default_max_tokens = j.value("default_max_tokens", cfg.default_max_tokens);
  cfg.retry_base_ms = j.value("retry_base_ms", cfg.retry_base_ms);
  return cfg;
}

inline json backend_to_json(const backend::BackendConfig& cfg) {
  return {{"base_url", cfg.base_url},
          {"model_name", cfg.model_name},
          {"api_key_env", cfg.api_key_env},
          {"request_timeout_ms", cfg.request_timeout_ms},
          {"max_retries", cfg.max_retries},
          {"default_temperature", cfg.default_temperature},
          {"default_max_tokens", cfg.default_max_tokens},
          {"retry_base_ms", cfg.retry_base_ms}};
}

struct RunConfig {
  backend::BackendConfig thinker;
  backend::BackendConfig expander;
  backend::BackendConfig judge;
  pipeline::PipelineConfig pipeline_config;  // templates + marker strings
  rewardlab::RewardParams reward;
  std::string price_sheet_path;
  std::string dataset_path;
  std::string output_dir = "out";
  int concurrency = 1;
  int warmup_count = 0;
  std::uint32_t seed = 0;
  bool stream = true;
};

/// Reads a template field that is either inline text or {"file": path}.
inline std::string template_from_json(const json& j, const std::string& fallback,
                                      const std::filesystem::path& base_dir) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_object() && j.contains("file")) {
    const auto path = base_dir / j["file"].get<std::string>();
    std::ifstream in(path);
    if (!in) throw Error("cannot open template file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  return fallback;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("config is not a JSON object: " + path);

  const auto base_dir = std::filesystem::path(path).parent_path();
  RunConfig cfg;
  if (j.contains("thinker")) cfg.thinker = backend_from_json(j["thinker"]);
  if (j.contains("expander")) cfg.expander = backend_from_json(j["expander"]);
  if (j.contains("judge")) cfg.judge = backend_from_json(j["judge"]);

  auto& p = cfg.pipeline_config;
  p.thinker = cfg.thinker;
  p.expander = cfg.expander;
  if (j.contains("templates")) {
    const auto& t = j["templates"];
    if (t.contains("thinker"))
      p.thinker_prompt_template = template_from_json(t["thinker"], p.thinker_prompt_template, base_dir);
    if (t.contains("expander_system"))
      p.expander_system_prompt =
          template_from_json(t["expander_system"], p.expander_system_prompt, base_dir);
    if (t.contains("expander_user"))
      p.expander_user_template =
          template_from_json(t["expander_user"], p.expander_user_template, base_dir);
    if (t.contains("baseline"))
      p.baseline_prompt_template =
          template_from_json(t["baseline"], p.baseline_prompt_template, base_dir);
  }
  p.think_open = j.value("think_open", p.think_open);
  p.think_close = j.value("think_close", p.think_close);
  pipeline::validate_templates(p);

  if (j.contains("reward")) {
    cfg.reward.lambda = j["reward"].value("lambda", cfg.reward.lambda);
    cfg.reward.alpha = j["reward"].value("alpha", cfg.reward.alpha);
    cfg.reward.eta = j["reward"].value("eta", cfg.reward.eta);
  }
  cfg.price_sheet_path = j.value("price_sheet", std::string());
  cfg.dataset_path = j.value("dataset", std::string());
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.concurrency = j.value("concurrency", cfg.concurrency);
  cfg.warmup_count = j.value("warmup_count", cfg.warmup_count);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.stream = j.value("stream", cfg.stream);
  p.stream = cfg.stream;

  if (!cfg.dataset_path.empty() && !std::filesystem::exists(base_dir / cfg.dataset_path) &&
      !std::filesystem::exists(cfg.dataset_path))
    throw Error("dataset file does not exist: " + cfg.dataset_path);
  if (!cfg.price_sheet_path.empty() &&
      !std::filesystem::exists(base_dir / cfg.price_sheet_path) &&
      !std::filesystem::exists(cfg.price_sheet_path))
    throw Error("price sheet does not exist: " + cfg.price_sheet_path);
  return cfg;
}

inline json run_config_to_json(const RunConfig& cfg) {
  return {{"thinker", backend_to_json(cfg.thinker)},
          {"expander", backend_to_json(cfg.expander)},
          {"judge", backend_to_json(cfg.judge)},
          {"templates",
           {{"thinker", cfg.pipeline_config.thinker_prompt_template},
            {"expander_system", cfg.pipeline_config.expander_system_prompt},
            {"expander_user", cfg.pipeline_config.expander_user_template},
            {"baseline", cfg.pipeline_config.baseline_prompt_template}}},
          {"think_open", cfg.pipeline_config.think_open},
          {"think_close", cfg.pipeline_config.think_close},
          {"reward",
           {{"lambda", cfg.reward.lambda}, {"alpha", cfg.reward.alpha}, {"eta", cfg.reward.eta}}},
          {"price_sheet", cfg.price_sheet_path},
          {"dataset", cfg.dataset_path},
          {"output_dir", cfg.output_dir},
          {"concurrency", cfg.concurrency},
          {"warmup_count", cfg.warmup_count},
          {"seed", cfg.seed},
          {"stream", cfg.stream}};
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

inline json result_to_json(const core::PipelineResult& r) {
  json stages = json::object();
  for (const auto& [stage, usage] : r.usage_by_stage)
    stages[stage] = {{"prompt_tokens", usage.prompt_tokens},
                     {"completion_tokens", usage.completion_tokens}};
  json j = {{"task_id", r.task_id},
            {"mode", core::to_string(r.mode)},
            {"cot",
             {{"text", r.cot.text},
              {"token_count", r.cot.token_count},
              {"source", core::to_string(r.cot.source)}}},
            {"response_text", r.response_text},
            {"usage_by_stage", stages},
            {"timing",
             {{"time_to_first_token_s", r.timing.time_to_first_token_s()},
              {"time_to_last_token_s", r.timing.time_to_last_token_s()},
              {"gap_count", r.timing.inter_token_gaps_s.size()}}},
            {"empty_cot", r.empty_cot},
            {"failed", r.failed}};
  if (r.extracted_answer) j["extracted_answer"] = *r.extracted_answer;
  if (r.failed) j["error"] = r.error;
  return j;
}

// ---------------------------------------------------------------------------
// Atomic writes and the run manifest
// ---------------------------------------------------------------------------

/// Writes through a temp file in the same directory, then renames into place.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  const auto dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write: " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Every run directory gets one of these so reports stay attributable.
inline json make_manifest(const RunConfig& cfg, const std::string& command) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(run_config_to_json(cfg).dump())));
  return {{"version", kVersion},
          {"command", command},
          {"config_hash", hash},
          {"seed", cfg.seed}};
}

}  // namespace hawkeye::config
