#include <gtest/gtest.h>

#include <string>

#include "hawkeye/mock_backend.hpp"
#include "hawkeye/pipeline.hpp"

using namespace hawkeye;
using backend::MockBackend;
using backend::ScriptEntry;
using core::PipelineMode;
using core::ReasoningTask;

namespace {

pipeline::PipelineConfig make_config(const MockBackend& thinker, const MockBackend& expander,
                                     bool stream = false) {
  pipeline::PipelineConfig cfg;
  cfg.thinker = thinker.config();
  cfg.expander = expander.config();
  cfg.stream = stream;
  return cfg;
}

ReasoningTask series_task() {
  ReasoningTask t;
  t.id = "series-1";
  t.question =
      "Find the common ratio of the infinite geometric series: -3/5, -5/3, -125/27, ...";
  t.gold_answer = "25/9";
  t.dataset = core::Dataset::MATH;
  return t;
}

const char* kSeriesCot =
    "Step 1: Identify the first term a1 = -3/5 and the second term a2 = -5/3.\n"
    "Step 2: The common ratio is r = a2 / a1 = (-5/3) / (-3/5) = (-5/3) * (5/-3) = 25/9.";

std::vector<ScriptEntry> thinker_script() {
  ScriptEntry entry;
  entry.match = {"common ratio"};
  entry.content = std::string("[Think]") + kSeriesCot + "[/Think]";
  entry.usage = core::TokenUsage{120, 58};
  return {entry};
}

std::vector<ScriptEntry> expander_script() {
  ScriptEntry entry;
  entry.match = {"common ratio"};
  entry.content =
      "To find the common ratio, divide the second term by the first: "
      "r = (-5/3) / (-3/5) = 25/9.\n\nFinal answer: \\boxed{\\dfrac{25}{9}}";
  entry.usage = core::TokenUsage{150, 64};
  return {entry};
}

}  // namespace

TEST(Think, StripsMarkers) {
  MockBackend thinker(thinker_script());
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);

  auto result = pipeline::think(cfg, series_task().question);
  EXPECT_EQ(result.cot.text, kSeriesCot);
  EXPECT_FALSE(result.empty_cot);
  EXPECT_EQ(result.cot.token_count, 58);  // backend-reported completion tokens
  EXPECT_EQ(result.cot.source, core::CoTSource::Thinker);
}

TEST(Think, NoMarkersSignalsEmptyCot) {
  ScriptEntry bare;
  bare.content = "I refuse to use markers.";
  MockBackend thinker({bare});
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);

  auto result = pipeline::think(cfg, "any question");
  EXPECT_TRUE(result.empty_cot);
  EXPECT_EQ(result.cot.text, "");
  EXPECT_EQ(result.cot.token_count, 0);
}

TEST(Think, EmptyQuestionRejected) {
  MockBackend thinker(thinker_script());
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);
  EXPECT_THROW(pipeline::think(cfg, "  \n "), std::invalid_argument);
}

TEST(Expand, CotTravelsVerbatim) {
  MockBackend thinker(thinker_script());
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);

  core::CoTTrace cot = core::make_trace(kSeriesCot, core::CoTSource::Thinker);
  auto result = pipeline::expand(cfg, series_task().question, cot);
  EXPECT_NE(result.text.find("25/9"), std::string::npos);

  const auto bodies = expander.received_bodies();
  ASSERT_EQ(bodies.size(), 1u);
  // The request body carries the outline verbatim (JSON-escaped newlines).
  const auto body = nlohmann::json::parse(bodies[0]);
  const std::string user = body["messages"][1]["content"].get<std::string>();
  EXPECT_NE(user.find(kSeriesCot), std::string::npos);
  EXPECT_NE(user.find(series_task().question), std::string::npos);
  EXPECT_EQ(body["messages"][0]["role"], "system");
}

TEST(Expand, EmptyCotStillCalls) {
  MockBackend thinker(thinker_script());
  ScriptEntry fallback;
  fallback.content = "42";
  MockBackend expander({fallback});
  auto cfg = make_config(thinker, expander);

  core::CoTTrace empty;
  auto result = pipeline::expand(cfg, "any question", empty);
  EXPECT_EQ(result.text, "42");
  EXPECT_EQ(expander.request_count(), 1);
}

TEST(RunPipeline, HawkeyeFullExtractsAnswer) {
  MockBackend thinker(thinker_script());
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);

  auto result = pipeline::run_pipeline(cfg, series_task(), PipelineMode::HawkeyeFull);
  ASSERT_FALSE(result.failed);
  ASSERT_TRUE(result.extracted_answer.has_value());
  EXPECT_EQ(*result.extracted_answer, "25/9");
  ASSERT_EQ(result.usage_by_stage.size(), 2u);
  EXPECT_EQ(result.usage_by_stage.at("think").completion_tokens, 58);
  EXPECT_EQ(result.usage_by_stage.at("expand").completion_tokens, 64);
  EXPECT_EQ(result.total_usage().completion_tokens, 58 + 64);
  EXPECT_EQ(result.total_usage().prompt_tokens, 120 + 150);
}

TEST(RunPipeline, CotOnlyHasSingleStageNoAnswer) {
  MockBackend thinker(thinker_script());
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);

  auto result = pipeline::run_pipeline(cfg, series_task(), PipelineMode::HawkeyeCotOnly);
  ASSERT_FALSE(result.failed);
  EXPECT_FALSE(result.extracted_answer.has_value());
  ASSERT_EQ(result.usage_by_stage.size(), 1u);
  EXPECT_TRUE(result.usage_by_stage.count("think"));
  EXPECT_EQ(expander.request_count(), 0);
}

TEST(RunPipeline, BaselineKeepsWholeOutput) {
  ScriptEntry baseline;
  baseline.match = {"*"};
  baseline.content =
      "<native reasoning>\nThe answer works out to five.\n\\boxed{5}";
  MockBackend thinker({baseline});
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);

  ReasoningTask t;
  t.id = "b1";
  t.question = "What is 2+3?";
  t.gold_answer = "5";
  auto result = pipeline::run_pipeline(cfg, t, PipelineMode::BaselineFull);
  ASSERT_FALSE(result.failed);
  EXPECT_EQ(result.response_text, baseline.content);
  EXPECT_TRUE(result.cot.text.empty());  // no think-segment in this output
  ASSERT_TRUE(result.extracted_answer.has_value());
  EXPECT_EQ(*result.extracted_answer, "5");
  ASSERT_EQ(result.usage_by_stage.size(), 1u);
  EXPECT_TRUE(result.usage_by_stage.count("full"));
  EXPECT_EQ(expander.request_count(), 0);
}

TEST(RunPipeline, StageFailureMarksResultNotThrow) {
  ScriptEntry broken;
  broken.fail_first = 1000000;
  MockBackend thinker({broken});
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);
  cfg.thinker.max_retries = 0;

  auto result = pipeline::run_pipeline(cfg, series_task(), PipelineMode::HawkeyeFull);
  EXPECT_TRUE(result.failed);
  EXPECT_FALSE(result.error.empty());
  EXPECT_FALSE(result.extracted_answer.has_value());
}

TEST(RunPipeline, DeterministicAgainstMock) {
  MockBackend thinker(thinker_script());
  MockBackend expander(expander_script());
  auto cfg = make_config(thinker, expander);

  auto a = pipeline::run_pipeline(cfg, series_task(), PipelineMode::HawkeyeFull);
  auto b = pipeline::run_pipeline(cfg, series_task(), PipelineMode::HawkeyeFull);
  EXPECT_EQ(a.response_text, b.response_text);
  EXPECT_EQ(a.cot.text, b.cot.text);
  EXPECT_EQ(a.extracted_answer, b.extracted_answer);
  EXPECT_EQ(a.total_usage(), b.total_usage());
}

TEST(RunPipeline, StreamingTimingsCaptured) {
  ScriptEntry think_entry;
  think_entry.match = {"*"};
  think_entry.content = "[Think]abcdefgh[/Think]";
  think_entry.chunk_sizes = {8, 8, 7};
  think_entry.per_chunk_delay_ms = 5;
  MockBackend thinker({think_entry});
  ScriptEntry expand_entry;
  expand_entry.match = {"*"};
  expand_entry.content = "result \\boxed{1}";
  expand_entry.chunk_sizes = {8, 8};
  expand_entry.per_chunk_delay_ms = 5;
  MockBackend expander({expand_entry});
  auto cfg = make_config(thinker, expander, /*stream=*/true);

  ReasoningTask t;
  t.id = "s1";
  t.question = "q";
  t.gold_answer = "1";
  auto result = pipeline::run_pipeline(cfg, t, PipelineMode::HawkeyeFull);
  ASSERT_FALSE(result.failed);
  EXPECT_LE(result.timing.t_submit, result.timing.t_first_token);
  EXPECT_LE(result.timing.t_first_token, result.timing.t_last_token);
  // gaps: (3 - 1) within think + (2 - 1) within expand; the stage boundary is
  // not a token gap
  EXPECT_EQ(result.timing.inter_token_gaps_s.size(), 3u);
  EXPECT_GT(result.timing.time_to_last_token_s(), 0.0);
}

TEST(Templates, SlotValidation) {
  pipeline::PipelineConfig cfg;
  pipeline::validate_templates(cfg);  // defaults are well-formed

  cfg.thinker_prompt_template = "no slot here";
  EXPECT_THROW(pipeline::validate_templates(cfg), std::invalid_argument);

  cfg = pipeline::PipelineConfig{};
  cfg.expander_user_template = "{question} {cot} {cot}";
  EXPECT_THROW(pipeline::validate_templates(cfg), std::invalid_argument);
}

TEST(Templates, RenderSubstitutesOnce) {
  const auto out = pipeline::render_template("Q: {question} C: {cot}",
                                             {{"question", "why"}, {"cot", "because"}});
  EXPECT_EQ(out, "Q: why C: because");
}

TEST(Templates, DefaultThinkerForbidsFinalAnswer) {
  const std::string t = pipeline::kDefaultThinkerTemplate;
  EXPECT_NE(t.find("do not give the final answer"), std::string::npos);
  EXPECT_NE(t.find("[Think]"), std::string::npos);
  EXPECT_NE(t.find("{question}"), std::string::npos);
}
