// Command-line front end: dataset runs, latency benchmarking, derived
// reports, the redundancy sweep, judge scoring, the training simulator, and
// the cost calculator. Exit codes: 0 success, 1 usage error, 2 runtime
// failure (with a machine-readable JSON error on stderr).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hawkeye/config.hpp"
#include "hawkeye/core.hpp"
#include "hawkeye/evalkit.hpp"
#include "hawkeye/metrics.hpp"
#include "hawkeye/mock_backend.hpp"
#include "hawkeye/pipeline.hpp"
#include "hawkeye/redundancy.hpp"
#include "hawkeye/rewardlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hawkeye;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string output_dir = "out";
};

config::RunConfig load_config_or_default(const CommonOpts& opts) {
  if (!opts.config_path.empty()) {
    auto cfg = config::load_run_config(opts.config_path);
    if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
    return cfg;
  }
  config::RunConfig cfg;
  cfg.output_dir = opts.output_dir;
  return cfg;
}

void write_manifest(const config::RunConfig& cfg, const std::string& command) {
  config::atomic_write_file(fs::path(cfg.output_dir) / "manifest.json",
                            config::make_manifest(cfg, command).dump(2) + "\n");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_run(const CommonOpts& opts, const std::string& mode_str, const std::string& dataset_arg,
            bool numeric_em) {
  auto cfg = load_config_or_default(opts);
  const auto mode = core::parse_mode(mode_str);
  if (!mode) throw Error("unknown mode: " + mode_str);
  const std::string dataset_path = !dataset_arg.empty() ? dataset_arg : cfg.dataset_path;
  if (dataset_path.empty()) throw Error("run needs --dataset or a dataset in the config");
  auto tasks = config::load_dataset(dataset_path);

  pipeline::validate_templates(cfg.pipeline_config);
  std::ostringstream lines;
  int strict_correct = 0;
  int numeric_correct = 0;
  int scored = 0;
  int failed = 0;
  for (const auto& task : tasks) {
    auto result = pipeline::run_pipeline(cfg.pipeline_config, task, *mode);
    if (result.failed) ++failed;
    if (*mode != core::PipelineMode::HawkeyeCotOnly && !result.failed) {
      ++scored;
      if (result.extracted_answer) {
        strict_correct += evalkit::exact_match(*result.extracted_answer, task.gold_answer,
                                               evalkit::MatchMode::Strict);
        numeric_correct += evalkit::exact_match(*result.extracted_answer, task.gold_answer,
                                                evalkit::MatchMode::Numeric);
      }
    }
    lines << config::result_to_json(result).dump() << "\n";
  }
  config::atomic_write_file(fs::path(cfg.output_dir) / "results.jsonl", lines.str());

  json summary = {{"mode", mode_str},
                  {"n", tasks.size()},
                  {"failed", failed},
                  {"scored", scored}};
  if (scored > 0) {
    summary["accuracy_strict"] = static_cast<double>(strict_correct) / scored;
    if (numeric_em)
      summary["accuracy_numeric"] = static_cast<double>(numeric_correct) / scored;
  }
  config::atomic_write_file(fs::path(cfg.output_dir) / "summary.json", summary.dump(2) + "\n");
  write_manifest(cfg, "run");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_bench(const CommonOpts& opts, const std::string& mode_str, const std::string& dataset_arg,
              int concurrency, int warmup, const std::string& label) {
  auto cfg = load_config_or_default(opts);
  const auto mode = core::parse_mode(mode_str);
  if (!mode) throw Error("unknown mode: " + mode_str);
  const std::string dataset_path = !dataset_arg.empty() ? dataset_arg : cfg.dataset_path;
  if (dataset_path.empty()) throw Error("bench needs --dataset or a dataset in the config");

  metrics::LoadProfile profile;
  profile.tasks = config::load_dataset(dataset_path);
  profile.concurrency = concurrency;
  profile.mode = *mode;
  profile.warmup_count = warmup;
  profile.dataset_label =
      !label.empty() ? label : core::to_string(profile.tasks.empty()
                                                   ? core::Dataset::Custom
                                                   : profile.tasks.front().dataset);

  auto load = metrics::run_load(profile, cfg.pipeline_config);
  config::atomic_write_file(fs::path(cfg.output_dir) / "bench_report.json",
                            metrics::to_json(load.report).dump(2) + "\n");
  std::ostringstream csv;
  metrics::write_report_csv(csv, {load.report});
  config::atomic_write_file(fs::path(cfg.output_dir) / "bench_report.csv", csv.str());
  write_manifest(cfg, "bench");
  std::cout << metrics::to_json(load.report).dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& baseline_path, const std::string& variant_path,
               const std::string& out_path) {
  const auto baseline =
      metrics::bench_report_from_json(json::parse(slurp(baseline_path)));
  const auto variant = metrics::bench_report_from_json(json::parse(slurp(variant_path)));
  const double sp = metrics::speedup(baseline, variant);
  const double retention = metrics::token_retention(baseline, variant);
  const double reduction = metrics::reduction_pct(baseline, variant);

  json out = {{"dataset", baseline.dataset},
              {"concurrency", baseline.concurrency},
              {"baseline_method", baseline.method},
              {"variant_method", variant.method},
              {"speedup", sp},
              {"token_retention", retention},
              {"reduction_pct", reduction}};
  char line[160];
  std::snprintf(line, sizeof line,
                "%s c=%d: speedup %.2fx, token retention %.1f%%, reduction %.1f%%\n",
                baseline.dataset.c_str(), baseline.concurrency, sp, retention * 100.0,
                reduction);
  std::cout << line << out.dump(2) << "\n";
  if (!out_path.empty()) config::atomic_write_file(out_path, out.dump(2) + "\n");
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& dataset_arg, const std::string& refs_path,
              const std::string& levels_csv, int width) {
  auto cfg = load_config_or_default(opts);
  const std::string dataset_path = !dataset_arg.empty() ? dataset_arg : cfg.dataset_path;
  if (dataset_path.empty()) throw Error("sweep needs --dataset or a dataset in the config");
  auto tasks = config::load_dataset(dataset_path);

  std::map<std::string, core::CoTTrace> refs;
  if (!refs_path.empty()) {
    refs = config::load_reference_cots(refs_path);
  } else {
    // No cache provided: generate references through the thinker once, then
    // cache them in the output directory for reproducible re-runs.
    for (const auto& task : tasks) {
      auto t = pipeline::think(cfg.pipeline_config, task.question);
      refs[task.id] = t.cot;
    }
    std::ostringstream cache;
    config::save_reference_cots(cache, refs);
    config::atomic_write_file(fs::path(cfg.output_dir) / "reference_cots.jsonl", cache.str());
  }

  std::vector<redundancy::CompressionLevel> levels;
  std::stringstream ss(levels_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (core::trim(item).empty()) continue;
    levels.push_back({std::stod(item)});
  }
  if (levels.empty())
    for (auto l : redundancy::default_levels()) levels.push_back(l);

  redundancy::SweepConfig scfg;
  scfg.compressor = cfg.thinker;
  scfg.responder = cfg.expander;
  scfg.expander_system_prompt = cfg.pipeline_config.expander_system_prompt;
  scfg.expander_user_template = cfg.pipeline_config.expander_user_template;
  scfg.concurrency_width = width;
  scfg.stream = false;

  auto curve = redundancy::run_sweep(tasks, refs, levels, scfg);
  std::ostringstream csv;
  redundancy::write_curve_csv(csv, curve);
  config::atomic_write_file(fs::path(cfg.output_dir) / "sweep_curve.csv", csv.str());
  write_manifest(cfg, "sweep");
  std::cout << csv.str();
  return 0;
}

int cmd_judge(const CommonOpts& opts, const std::string& results_path,
              const std::string& dataset_arg) {
  auto cfg = load_config_or_default(opts);
  const std::string dataset_path = !dataset_arg.empty() ? dataset_arg : cfg.dataset_path;
  std::map<std::string, std::string> questions;
  if (!dataset_path.empty())
    for (const auto& t : config::load_dataset(dataset_path)) questions[t.id] = t.question;

  std::ifstream in(results_path);
  if (!in) throw Error("cannot open results: " + results_path);
  std::ostringstream lines;
  double sums[5] = {0, 0, 0, 0, 0};
  int n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (core::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("response_text")) continue;
    const std::string response = j["response_text"].get<std::string>();
    if (response.empty()) continue;
    const std::string task_id = j.value("task_id", std::string());
    const std::string question =
        questions.count(task_id) ? questions[task_id] : j.value("question", std::string());
    auto result = evalkit::judge(question, response, cfg.judge);
    sums[0] += result.scores.clarity;
    sums[1] += result.scores.completeness;
    sums[2] += result.scores.coherence;
    sums[3] += result.scores.correctness;
    sums[4] += result.scores.conciseness;
    ++n;
    json rec = {{"task_id", task_id},
                {"scores",
                 {{"clarity", result.scores.clarity},
                  {"completeness", result.scores.completeness},
                  {"coherence", result.scores.coherence},
                  {"correctness", result.scores.correctness},
                  {"conciseness", result.scores.conciseness}}},
                {"re_asked", result.re_asked},
                {"transcript", {{"prompt", result.prompt}, {"raw_reply", result.raw_reply}}}};
    lines << rec.dump() << "\n";
  }
  config::atomic_write_file(fs::path(cfg.output_dir) / "judge_scores.jsonl", lines.str());
  json means = json::object();
  if (n > 0) {
    means = {{"clarity", sums[0] / n},
             {"completeness", sums[1] / n},
             {"coherence", sums[2] / n},
             {"correctness", sums[3] / n},
             {"conciseness", sums[4] / n},
             {"n", n}};
  }
  config::atomic_write_file(fs::path(cfg.output_dir) / "judge_means.json",
                            means.dump(2) + "\n");
  write_manifest(cfg, "judge");
  std::cout << means.dump(2) << "\n";
  return 0;
}

int cmd_simulate(const CommonOpts& opts, const std::string& mode_str, int steps, int group_size,
                 unsigned seed, double lambda, double alpha, double eta, int len_orig, int bins,
                 const std::string& out_file) {
  rewardlab::SimEnv env;
  if (mode_str == "always_one") {
    env.em_curve = rewardlab::EmCurve::AlwaysOne;
  } else if (mode_str == "responder_coupled") {
    env.em_curve = rewardlab::EmCurve::ResponderCoupled;
  } else {
    throw Error("unknown simulate mode: " + mode_str);
  }
  env.rng_seed = seed;
  env.len_orig = len_orig;

  rewardlab::RewardParams params;
  params.lambda = lambda;
  params.alpha = alpha;
  params.eta = eta;

  auto state = rewardlab::PolicyState::make_default(bins);
  auto trajectory = rewardlab::simulate_training(env, params, steps, group_size, state);

  std::ostringstream csv;
  rewardlab::write_trajectory_csv(csv, trajectory, state.bins);
  const fs::path out =
      !out_file.empty() ? fs::path(out_file) : fs::path(opts.output_dir) / "trajectory.csv";
  config::atomic_write_file(out, csv.str());

  const auto& last = trajectory.back();
  json summary = {{"mode", mode_str},
                  {"steps", steps},
                  {"group_size", group_size},
                  {"seed", seed},
                  {"final_mean_selected_ratio", last.mean_selected_ratio},
                  {"final_mean_reward", last.mean_reward},
                  {"max_attainable_mean_reward",
                   rewardlab::max_attainable_mean_reward(env, params, state.bins)},
                  {"csv", out.string()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_cost(const std::string& prices_path, const std::string& usage_path,
             const std::string& out_path) {
  const auto sheet = metrics::load_price_sheet(prices_path);
  json usage_spec = json::parse(slurp(usage_path));
  if (!usage_spec.is_array()) throw Error("usage file must be a JSON array");

  json rows = json::array();
  double reference_cost = -1.0;
  for (const auto& entry : usage_spec) {
    const std::string label = entry.value("label", std::string("unnamed"));
    const std::int64_t requests = entry.value("requests", std::int64_t{1});
    std::vector<std::pair<core::TokenUsage, metrics::ModelPrice>> stages;
    for (const auto& stage : entry["stages"]) {
      core::TokenUsage u;
      u.prompt_tokens = stage.value("prompt_tokens", std::int64_t{0});
      u.completion_tokens = stage.value("completion_tokens", std::int64_t{0});
      stages.emplace_back(u, sheet.require(stage["model"].get<std::string>()));
    }
    const auto per_request = metrics::cost_per_request(stages);
    const auto estimate = metrics::estimate_cost(per_request, requests);
    json row = {{"label", label},
                {"cost_per_request_usd", estimate.cost_per_request_usd},
                {"total_usd", estimate.total_usd},
                {"requests", estimate.request_count}};
    if (reference_cost < 0.0) {
      reference_cost = estimate.total_usd;
    } else if (reference_cost > 0.0) {
      row["savings_vs_reference_pct"] =
          metrics::savings_pct(reference_cost, estimate.total_usd) * 100.0;
    }
    rows.push_back(row);
  }
  std::cout << rows.dump(2) << "\n";
  if (!out_path.empty()) config::atomic_write_file(out_path, rows.dump(2) + "\n");
  return 0;
}

int cmd_mockserve(const std::string& script_path) {
  json script_json = json::parse(slurp(script_path));
  backend::MockBackend mock(backend::load_script_json(script_json));
  std::cout << "listening on 127.0.0.1:" << mock.port() << std::endl;
  // Serve until the process is terminated.
  while (true) std::this_thread::sleep_for(std::chrono::seconds(3600));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage reasoning gateway and measurement suite"};
  app.require_subcommand(1);

  CommonOpts common;

  // --- run ---
  auto* run = app.add_subcommand("run", "Run the pipeline over a dataset and score answers");
  std::string run_mode = "hawkeye_full";
  std::string run_dataset;
  bool run_numeric = false;
  run->add_option("--mode", run_mode, "baseline_full | hawkeye_full | hawkeye_cot_only");
  run->add_option("--dataset", run_dataset, "JSONL dataset path");
  run->add_option("--config", common.config_path, "Run config JSON");
  run->add_option("--out", common.output_dir, "Output directory");
  run->add_flag("--numeric-em", run_numeric, "Also report numeric-mode accuracy");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "Closed-loop latency benchmark");
  std::string bench_mode = "hawkeye_full";
  std::string bench_dataset;
  std::string bench_label;
  int bench_concurrency = 10;
  int bench_warmup = 0;
  bench->add_option("--mode", bench_mode, "Pipeline mode");
  bench->add_option("--dataset", bench_dataset, "JSONL dataset path");
  bench->add_option("--concurrency", bench_concurrency, "Requests held in flight");
  bench->add_option("--warmup", bench_warmup, "Leading completions excluded from the report");
  bench->add_option("--label", bench_label, "Dataset label for the report row");
  bench->add_option("--config", common.config_path, "Run config JSON");
  bench->add_option("--out", common.output_dir, "Output directory");

  // --- report ---
  auto* report = app.add_subcommand("report", "Speedup / token retention between two reports");
  std::string report_baseline, report_variant, report_out;
  report->add_option("--baseline", report_baseline, "Baseline BenchReport JSON")->required();
  report->add_option("--variant", report_variant, "Variant BenchReport JSON")->required();
  report->add_option("--out", report_out, "Write the comparison JSON here");

  // --- sweep ---
  auto* sweep = app.add_subcommand("sweep", "Redundancy sweep: accuracy vs compression rate");
  std::string sweep_dataset, sweep_refs;
  std::string sweep_levels = "0.8,0.6,0.4,0.3,0.2,0.1";
  int sweep_width = 4;
  sweep->add_option("--dataset", sweep_dataset, "JSONL dataset path");
  sweep->add_option("--refs", sweep_refs, "Cached reference chains (JSONL)");
  sweep->add_option("--levels", sweep_levels, "Comma-separated target ratios");
  sweep->add_option("--width", sweep_width, "Concurrent tasks per level");
  sweep->add_option("--config", common.config_path, "Run config JSON");
  sweep->add_option("--out", common.output_dir, "Output directory");

  // --- judge ---
  auto* judge = app.add_subcommand("judge", "Score responses with the five-dimension rubric");
  std::string judge_results, judge_dataset;
  judge->add_option("--results", judge_results, "results.jsonl from a run")->required();
  judge->add_option("--dataset", judge_dataset, "Dataset for question lookup");
  judge->add_option("--config", common.config_path, "Run config JSON");
  judge->add_option("--out", common.output_dir, "Output directory");

  // --- simulate ---
  auto* simulate = app.add_subcommand("simulate", "Deterministic policy-training simulator");
  std::string sim_mode = "responder_coupled";
  int sim_steps = 2000, sim_group = 8, sim_len_orig = 200, sim_bins = 20;
  unsigned sim_seed = 0;
  double sim_lambda = 1e-4, sim_alpha = 0.3, sim_eta = 0.05;
  std::string sim_out_file;
  simulate->add_option("--mode", sim_mode, "responder_coupled | always_one");
  simulate->add_option("--steps", sim_steps, "Training steps");
  simulate->add_option("--group-size", sim_group, "Samples per step");
  simulate->add_option("--seed", sim_seed, "RNG seed");
  simulate->add_option("--lambda", sim_lambda, "Length penalty weight");
  simulate->add_option("--alpha", sim_alpha, "Target compression ratio");
  simulate->add_option("--eta", sim_eta, "Learning rate");
  simulate->add_option("--len-orig", sim_len_orig, "Reference chain length in tokens");
  simulate->add_option("--bins", sim_bins, "Number of ratio bins");
  simulate->add_option("--csv", sim_out_file, "Trajectory CSV path");
  simulate->add_option("--out", common.output_dir, "Output directory");

  // --- cost ---
  auto* cost = app.add_subcommand("cost", "Price recorded token usage");
  std::string cost_prices, cost_usage, cost_out;
  cost->add_option("--prices", cost_prices, "Price sheet JSON")->required();
  cost->add_option("--usage", cost_usage, "Usage spec JSON")->required();
  cost->add_option("--out", cost_out, "Write the comparison JSON here");

  // --- mockserve ---
  auto* mockserve = app.add_subcommand("mockserve", "Run the scripted mock backend");
  std::string mock_script;
  mockserve->add_option("--script", mock_script, "Script JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(common, run_mode, run_dataset, run_numeric);
    if (bench->parsed())
      return cmd_bench(common, bench_mode, bench_dataset, bench_concurrency, bench_warmup,
                       bench_label);
    if (report->parsed()) return cmd_report(report_baseline, report_variant, report_out);
    if (sweep->parsed())
      return cmd_sweep(common, sweep_dataset, sweep_refs, sweep_levels, sweep_width);
    if (judge->parsed()) return cmd_judge(common, judge_results, judge_dataset);
    if (simulate->parsed())
      return cmd_simulate(common, sim_mode, sim_steps, sim_group, sim_seed, sim_lambda,
                          sim_alpha, sim_eta, sim_len_orig, sim_bins, sim_out_file);
    if (cost->parsed()) return cmd_cost(cost_prices, cost_usage, cost_out);
    if (mockserve->parsed()) return cmd_mockserve(mock_script);
  } catch (const std::exception& ex) {
    nlohmann::json err = {{"error", ex.what()}};
    std::cerr << err.dump() << std::endl;
    return 2;
  }
  return 1;
}
