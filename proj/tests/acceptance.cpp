// Acceptance suite: nine numbered criteria, one pass/fail line each, exit
// code = number of failures. Each criterion also reports its runtime against
// the budget it must stay under.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "appendix_fixture.hpp"
#include "hawkeye/config.hpp"
#include "hawkeye/metrics.hpp"
#include "hawkeye/mock_backend.hpp"
#include "hawkeye/pipeline.hpp"
#include "hawkeye/redundancy.hpp"
#include "hawkeye/rewardlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hawkeye;

namespace {

struct Check {
  int failures = 0;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      ++failures;
      notes.push_back(what);
    }
  }
};

int g_failed_criteria = 0;

void run_criterion(int number, const std::string& title, double budget_s,
                   const std::function<void(Check&)>& body) {
  Check check;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(check);
  } catch (const std::exception& ex) {
    check.require(false, std::string("exception: ") + ex.what());
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  check.require(elapsed < budget_s, "runtime " + std::to_string(elapsed) + "s exceeds budget");

  if (check.failures == 0) {
    std::printf("[PASS] criterion %d: %s (%.2fs)\n", number, title.c_str(), elapsed);
  } else {
    ++g_failed_criteria;
    std::printf("[FAIL] criterion %d: %s (%.2fs)\n", number, title.c_str(), elapsed);
    for (const auto& note : check.notes) std::printf("       - %s\n", note.c_str());
  }
  std::fflush(stdout);
}

std::string fixture(const std::string& rel) {
  return std::string(HAWKEYE_FIXTURE_DIR) + "/" + rel;
}

fs::path scratch_dir() {
  const auto dir = fs::temp_directory_path() / "hawkeye_acceptance";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- criterion 1 -----------------------------------------------------------

void criterion_reward_formula(Check& check) {
  for (double lambda : {0.0, 1e-4, 1e-3}) {
    rewardlab::RewardParams params;
    params.lambda = lambda;
    for (int i = 0; i <= 40; ++i) {
      for (int j = 0; j <= 40; ++j) {
        const std::int64_t len_c = 10 * i;
        const std::int64_t len_orig = 10 * j;
        for (int em : {0, 1}) {
          const double got = rewardlab::reward(em, len_c, len_orig, params);
          // independent re-evaluation in extended precision
          const long double over =
              static_cast<long double>(len_c) -
              static_cast<long double>(params.alpha) * static_cast<long double>(len_orig);
          const long double pen =
              over > 0.0L ? static_cast<long double>(lambda) * over * over : 0.0L;
          const long double want = static_cast<long double>(em) - pen;
          const long double diff = std::fabs(static_cast<long double>(got) - want);
          const long double scale = std::max<long double>(1.0L, std::fabs(want));
          check.require(diff / scale <= 1e-12L,
                        "reward mismatch at len_c=" + std::to_string(len_c) +
                            " len_orig=" + std::to_string(len_orig));
        }
        // penalty zero exactly iff len_c <= 0.3 * len_orig (integer arithmetic)
        const double pen = rewardlab::length_penalty(len_c, len_orig, params);
        const bool math_zero = 10 * len_c <= 3 * len_orig;
        if (lambda > 0.0) {
          check.require((pen == 0.0) == math_zero,
                        "penalty zero-set mismatch at len_c=" + std::to_string(len_c) +
                            " len_orig=" + std::to_string(len_orig));
        } else {
          check.require(pen == 0.0, "penalty must vanish at lambda=0");
        }
      }
    }
  }
}

// --- criterion 2 -----------------------------------------------------------

double fd_objective(const std::vector<double>& theta, const std::vector<rewardlab::Sample>& samples,
                    const std::vector<double>& weights, bool average) {
  double m = theta[0];
  for (double t : theta) m = std::max(m, t);
  double sum = 0.0;
  for (double t : theta) sum += std::exp(t - m);
  const double log_z = std::log(sum) + m;
  double J = 0.0;
  for (size_t i = 0; i < samples.size(); ++i)
    J += weights[i] * (theta[samples[i].bin_index] - log_z);
  return average ? J / static_cast<double>(samples.size()) : J;
}

void criterion_policy_gradient(Check& check) {
  std::mt19937 gen(99);
  rewardlab::RewardParams params;
  const double h = 1e-6;
  for (int k : {2, 3, 5}) {
    for (auto mode : {rewardlab::StepMode::Reinforce, rewardlab::StepMode::GroupRelative}) {
      for (int trial = 0; trial < 25; ++trial) {
        auto state = rewardlab::PolicyState::make_default(k);
        for (auto& t : state.theta)
          t = (static_cast<double>(gen() % 2000) - 1000.0) / 500.0;
        std::vector<rewardlab::Sample> samples;
        for (int i = 0; i < 6; ++i)
          samples.push_back({static_cast<int>(gen() % k),
                             (static_cast<double>(gen() % 2000) - 1000.0) / 1000.0});

        std::vector<double> weights(samples.size());
        const bool average = mode == rewardlab::StepMode::GroupRelative;
        if (!average) {
          for (size_t i = 0; i < samples.size(); ++i) weights[i] = samples[i].reward;
        } else {
          double mean = 0.0;
          for (const auto& s : samples) mean += s.reward;
          mean /= static_cast<double>(samples.size());
          double var = 0.0;
          for (const auto& s : samples) var += (s.reward - mean) * (s.reward - mean);
          const double stddev = std::sqrt(var / static_cast<double>(samples.size()));
          for (size_t i = 0; i < samples.size(); ++i)
            weights[i] = (samples[i].reward - mean) / (stddev + 1e-8);
        }

        const auto next = rewardlab::policy_step(state, samples, params, mode);
        for (int j = 0; j < k; ++j) {
          const double analytic = (next.theta[j] - state.theta[j]) / params.eta;
          auto plus = state.theta, minus = state.theta;
          plus[j] += h;
          minus[j] -= h;
          const double fd = (fd_objective(plus, samples, weights, average) -
                             fd_objective(minus, samples, weights, average)) /
                            (2.0 * h);
          const double scale = std::max({1e-6, std::abs(analytic), std::abs(fd)});
          check.require(std::abs(analytic - fd) / scale <= 1e-5,
                        "gradient mismatch k=" + std::to_string(k) + " component " +
                            std::to_string(j));
        }
      }
    }
  }
}

// --- criterion 3 -----------------------------------------------------------

struct SimOutcome {
  double final_ratio = 0.0;
  double trailing_reward = 0.0;
  double max_attainable = 0.0;
};

SimOutcome run_sim_via_cli(const std::string& cli, const std::string& mode,
                           const fs::path& scratch) {
  const auto csv_path = scratch / ("traj_" + mode + ".csv");
  const auto out_file = scratch / ("sim_" + mode + ".out");
  const std::string cmd = cli + " simulate --mode " + mode +
                          " --seed 7 --steps 2000 --group-size 8 --csv " + csv_path.string() +
                          " --out " + scratch.string() + " >" + out_file.string() + " 2>&1";
  if (std::system(cmd.c_str()) != 0) throw Error("simulate subcommand failed: " + mode);

  std::ifstream in(csv_path);
  if (!in) throw Error("missing trajectory csv");
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::pair<double, double>> rows;  // (ratio, reward)
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // step
    std::getline(ss, cell, ',');
    const double ratio = std::stod(cell);
    std::getline(ss, cell, ',');
    const double reward = std::stod(cell);
    rows.emplace_back(ratio, reward);
  }
  if (rows.size() != 2000) throw Error("expected 2000 trajectory rows");

  const auto summary = json::parse(slurp(out_file), nullptr, false);
  SimOutcome out;
  out.final_ratio = rows.back().first;
  const int window = 100;  // last 5% of the budget
  double sum = 0.0;
  for (int i = 0; i < window; ++i) sum += rows[rows.size() - 1 - i].second;
  out.trailing_reward = sum / window;
  if (!summary.is_discarded() && summary.contains("max_attainable_mean_reward"))
    out.max_attainable = summary["max_attainable_mean_reward"].get<double>();
  return out;
}

SimOutcome run_sim_in_process(const std::string& mode) {
  rewardlab::SimEnv env;
  env.em_curve = mode == "always_one" ? rewardlab::EmCurve::AlwaysOne
                                      : rewardlab::EmCurve::ResponderCoupled;
  env.rng_seed = 7;
  rewardlab::RewardParams params;
  const auto traj = rewardlab::simulate_training(env, params, 2000, 8);
  SimOutcome out;
  out.final_ratio = traj.back().mean_selected_ratio;
  const int window = 100;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) sum += traj[traj.size() - 1 - i].mean_reward;
  out.trailing_reward = sum / window;
  out.max_attainable = rewardlab::max_attainable_mean_reward(
      env, params, rewardlab::PolicyState::make_default().bins);
  return out;
}

void criterion_training_dynamics(Check& check) {
  const char* cli = std::getenv("HAWKEYE_CLI");
  const auto scratch = scratch_dir();
  const auto run = [&](const std::string& mode) {
    return (cli && *cli) ? run_sim_via_cli(cli, mode, scratch) : run_sim_in_process(mode);
  };

  const auto hacked = run("always_one");
  check.require(hacked.final_ratio < 0.10,
                "always_one final mean ratio " + std::to_string(hacked.final_ratio) +
                    " not below 0.10");
  check.require(hacked.trailing_reward >= 0.95 * hacked.max_attainable,
                "always_one trailing reward below 95% of attainable");

  const auto coupled = run("responder_coupled");
  check.require(coupled.final_ratio >= 0.25 && coupled.final_ratio <= 0.45,
                "responder_coupled final mean ratio " + std::to_string(coupled.final_ratio) +
                    " outside [0.25, 0.45]");
  check.require(coupled.trailing_reward >= 0.95 * coupled.max_attainable,
                "responder_coupled trailing reward " +
                    std::to_string(coupled.trailing_reward) + " below 95% of " +
                    std::to_string(coupled.max_attainable));
}

// --- criterion 4 -----------------------------------------------------------

void criterion_report_arithmetic(Check& check) {
  struct Row {
    const char* baseline;
    const char* variant;
    double speedup_target;
    double reduction_target;
    bool check_speedup;
    bool check_reduction;
  };
  const Row rows[] = {
      {"table_rows/gsm8k_c100_baseline.json", "table_rows/gsm8k_c100_cotonly.json", 1.8, 48.3,
       true, true},
      {"table_rows/math500_c100_baseline.json", "table_rows/math500_c100_cotonly.json", 3.4,
       67.5, true, true},
      {"table_rows/math_c100_baseline.json", "table_rows/math_c100_cotonly.json", 2.8, 0.0,
       true, false},
      {"table_rows/math_c10_baseline.json", "table_rows/math_c10_cotonly.json", 0.0, 61.7,
       false, true},
  };
  for (const auto& row : rows) {
    const auto baseline =
        metrics::bench_report_from_json(json::parse(slurp(fixture(row.baseline))));
    const auto variant =
        metrics::bench_report_from_json(json::parse(slurp(fixture(row.variant))));
    if (row.check_speedup) {
      const double sp = metrics::speedup(baseline, variant);
      check.require(std::abs(sp - row.speedup_target) <= 0.05,
                    std::string(row.baseline) + ": speedup " + std::to_string(sp) +
                        " not within 0.05 of " + std::to_string(row.speedup_target));
    }
    if (row.check_reduction) {
      const double red = metrics::reduction_pct(baseline, variant);
      check.require(std::abs(red - row.reduction_target) <= 0.1,
                    std::string(row.baseline) + ": reduction " + std::to_string(red) +
                        " not within 0.1pp of " + std::to_string(row.reduction_target));
    }
  }

  // The same numbers through the CLI `report` surface.
  if (const char* cli = std::getenv("HAWKEYE_CLI"); cli && *cli) {
    const auto scratch = scratch_dir();
    const auto out_json = scratch / "report_gsm8k.json";
    const std::string cmd = std::string(cli) + " report --baseline " +
                            fixture("table_rows/gsm8k_c100_baseline.json") + " --variant " +
                            fixture("table_rows/gsm8k_c100_cotonly.json") + " --out " +
                            out_json.string() + " >" + (scratch / "report.out").string() +
                            " 2>&1";
    check.require(std::system(cmd.c_str()) == 0, "report subcommand failed");
    const auto parsed = json::parse(slurp(out_json), nullptr, false);
    check.require(!parsed.is_discarded() &&
                      std::abs(parsed.value("speedup", 0.0) - 1.75) < 0.005 &&
                      std::abs(parsed.value("reduction_pct", 0.0) - 48.3) <= 0.1,
                  "CLI report output mismatch");
  }
}

// --- criterion 5 -----------------------------------------------------------

void criterion_cost_model(Check& check) {
  core::TokenUsage one_m{0, 1000000};
  check.require(metrics::cost_per_request(one_m, {15.0, 60.0}).dollars() == 60.0,
                "1M output tokens at $60/M must price to exactly $60.00");
  check.require(metrics::cost_per_request(one_m, {0.55, 2.19}).dollars() == 2.19,
                "1M output tokens at $2.19/M must price to exactly $2.19");

  std::mt19937 gen(1);
  const metrics::ModelPrice price{1.37, 2.19};
  for (int probe = 0; probe < 10; ++probe) {
    core::TokenUsage a{static_cast<std::int64_t>(gen() % 2000000),
                       static_cast<std::int64_t>(gen() % 2000000)};
    core::TokenUsage b{static_cast<std::int64_t>(gen() % 2000000),
                       static_cast<std::int64_t>(gen() % 2000000)};
    const auto ca = metrics::cost_per_request(a, price).picos;
    const auto cb = metrics::cost_per_request(b, price).picos;
    const auto cab = metrics::cost_per_request(a + b, price).picos;
    check.require(cab == ca + cb, "cost must be exactly additive in token counts");
    const std::int64_t k = 1 + gen() % 7;
    core::TokenUsage scaled{a.prompt_tokens * k, a.completion_tokens * k};
    check.require(metrics::cost_per_request(scaled, price).picos == k * ca,
                  "cost must scale exactly with token counts");
  }
}

// --- criterion 6 -----------------------------------------------------------

void criterion_end_to_end(Check& check) {
  backend::MockBackend thinker(testfx::appendix_thinker_script());
  backend::MockBackend expander(testfx::appendix_expander_script());
  pipeline::PipelineConfig cfg;
  cfg.thinker = thinker.config();
  cfg.expander = expander.config();
  cfg.stream = false;

  const auto tasks = config::load_dataset(fixture("appendix_tasks.jsonl"));
  check.require(tasks.size() == 2, "fixture set must have two tasks");

  int correct = 0;
  for (const auto& task : tasks) {
    const auto result = pipeline::run_pipeline(cfg, task, core::PipelineMode::HawkeyeFull);
    check.require(!result.failed, "pipeline failed for " + task.id + ": " + result.error);
    check.require(result.extracted_answer.has_value(), "no answer extracted for " + task.id);
    if (result.extracted_answer) {
      correct += evalkit::exact_match(*result.extracted_answer, task.gold_answer);
    }
    // per-stage usage sums exactly to the total
    check.require(result.usage_by_stage.size() == 2, "expected think and expand stages");
    core::TokenUsage manual;
    for (const auto& [_, usage] : result.usage_by_stage) manual += usage;
    check.require(manual == result.total_usage(), "stage usage does not sum to total");
    check.require(manual.completion_tokens ==
                      result.usage_by_stage.at("think").completion_tokens +
                          result.usage_by_stage.at("expand").completion_tokens,
                  "completion tokens must sum over stages exactly");
  }
  check.require(correct == 2, "accuracy must be 1.0 on the two-task fixture set, got " +
                                  std::to_string(correct) + "/2");
}

// --- criterion 7 -----------------------------------------------------------

void criterion_sweep_oracle(Check& check) {
  const std::vector<double> levels{0.8, 0.6, 0.4, 0.3, 0.2, 0.1};
  const std::vector<std::string> names{"t1", "t2", "t3", "t4"};

  std::vector<core::ReasoningTask> tasks;
  std::map<std::string, core::CoTTrace> refs;
  std::vector<backend::ScriptEntry> compressor_script;
  std::vector<backend::ScriptEntry> responder_script;
  for (const auto& name : names) {
    core::ReasoningTask task;
    task.id = name;
    task.question = "question " + name;
    task.gold_answer = "7";
    tasks.push_back(task);

    std::string cot = "REF" + name + " ";
    while (cot.size() < 400) cot += "step ";
    cot.resize(400);
    refs[name] = core::make_trace(cot, core::CoTSource::Reference, 100);

    std::vector<double> by_length = levels;  // already descending
    for (double ratio : by_length) {
      const auto keep = static_cast<size_t>(ratio * 400.0 + 0.5);
      backend::ScriptEntry comp;
      char pct[16];
      std::snprintf(pct, sizeof pct, "%g%%", ratio * 100.0);
      comp.match = {pct, "REF" + name};
      comp.content = cot.substr(0, keep);
      comp.usage = core::TokenUsage{50, static_cast<std::int64_t>(ratio * 100.0 + 0.5)};
      compressor_script.push_back(comp);

      backend::ScriptEntry resp;
      resp.match = {comp.content};
      resp.content = ratio >= 0.3 ? "The answer is \\boxed{7}" : "The answer is \\boxed{0}";
      responder_script.push_back(resp);
    }
  }
  backend::MockBackend compressor(compressor_script);
  backend::MockBackend responder(responder_script);

  redundancy::SweepConfig cfg;
  cfg.compressor = compressor.config();
  cfg.responder = responder.config();
  cfg.concurrency_width = 4;

  std::vector<redundancy::CompressionLevel> level_objs;
  for (double l : levels) level_objs.push_back({l});
  const auto curve = redundancy::run_sweep(tasks, refs, level_objs, cfg);

  check.require(curve.size() == levels.size(), "curve must have six points");
  for (size_t i = 0; i < curve.size(); ++i) {
    const double expected_accuracy = levels[i] >= 0.3 ? 1.0 : 0.0;
    check.require(curve[i].accuracy == expected_accuracy,
                  "accuracy at level " + std::to_string(levels[i]) + " is " +
                      std::to_string(curve[i].accuracy) + ", expected step value " +
                      std::to_string(expected_accuracy));
    check.require(std::abs(curve[i].achieved_rate - levels[i]) <= 1e-12,
                  "achieved rate must equal the target under the truncating compressor");
    check.require(curve[i].n == static_cast<int>(tasks.size()),
                  "every point must cover all tasks");
    check.require(curve[i].failures == 0, "oracle sweep must not record failures");
  }
}

// --- criterion 8 -----------------------------------------------------------

void criterion_concurrency_contract(Check& check) {
  backend::ScriptEntry entry;
  entry.content = "0123456789abcdef";
  entry.chunk_sizes = {4, 4, 4, 4};
  entry.per_chunk_delay_ms = 50;
  backend::MockBackend mock({entry});

  pipeline::PipelineConfig cfg;
  cfg.thinker = mock.config();
  cfg.stream = true;

  metrics::LoadProfile profile;
  for (int i = 0; i < 40; ++i) {
    core::ReasoningTask t;
    t.id = "bench-" + std::to_string(i);
    t.question = "bench task " + std::to_string(i);
    t.gold_answer = "1";
    profile.tasks.push_back(t);
  }
  profile.concurrency = 10;
  profile.mode = core::PipelineMode::BaselineFull;
  profile.warmup_count = 0;

  const auto load = metrics::run_load(profile, cfg);
  check.require(load.report.n == 40, "all requests must complete");
  check.require(load.report.failed == 0, "no request may fail");

  check.require(mock.max_in_flight() <= 10, "probe observed more than 10 concurrent streams");
  check.require(mock.max_in_flight() == 10, "probe never observed 10 concurrent streams");
  const auto samples = mock.in_flight_samples();
  check.require(samples.size() == 40, "one probe sample per request");
  int at_level = 0;
  int steady = 0;
  for (size_t i = 10; i + 10 < samples.size(); ++i) {  // skip ramp-up and drain
    ++steady;
    if (samples[i] == 10) ++at_level;
  }
  check.require(steady > 0 && at_level >= (steady * 8) / 10,
                "steady-state gauge must sit at the concurrency level");

  check.require(load.report.avg_tbt_s >= 0.045 && load.report.avg_tbt_s <= 0.060,
                "avg TBT " + std::to_string(load.report.avg_tbt_s) + " outside [0.045, 0.060]");
}

// --- criterion 9 -----------------------------------------------------------

void criterion_compression_fixture(Check& check) {
  const auto original = core::make_trace("original", core::CoTSource::Reference, 600);
  const auto compressed = core::make_trace("compressed", core::CoTSource::Compressed, 182);
  const double rate = redundancy::compression_rate(original, compressed);
  check.require(std::abs(rate - 0.3033) <= 0.0001,
                "compression rate " + std::to_string(rate) + " not 0.3033 +/- 0.0001");
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run_criterion(1, "reward formula grid matches independent evaluation", 1.0,
                criterion_reward_formula);
  run_criterion(2, "analytic policy gradient matches finite differences", 5.0,
                criterion_policy_gradient);
  run_criterion(3, "seeded training dynamics: collapse vs stabilization", 30.0,
                criterion_training_dynamics);
  run_criterion(4, "report arithmetic reproduces recorded speedups and reductions", 1.0,
                criterion_report_arithmetic);
  run_criterion(5, "cost model prices and exact linearity", 1.0, criterion_cost_model);
  run_criterion(6, "end-to-end pipeline over scripted fixtures", 5.0, criterion_end_to_end);
  run_criterion(7, "redundancy sweep equals the analytic step function", 10.0,
                criterion_sweep_oracle);
  run_criterion(8, "closed-loop concurrency contract and TBT window", 30.0,
                criterion_concurrency_contract);
  run_criterion(9, "compression-rate fixture (600 to 182 tokens)", 1.0,
                criterion_compression_fixture);

  if (g_failed_criteria == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria failed\n", g_failed_criteria);
  }
  return g_failed_criteria;
}
