#pragma once

// Closed-loop load generation, latency metrics (time per request, average
// time-between-tokens, tokens per request), derived speedup/retention
// arithmetic, and the token-priced cost model.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hawkeye/core.hpp"
#include "hawkeye/pipeline.hpp"

namespace hawkeye::metrics {

using core::PipelineMode;
using core::PipelineResult;
using core::ReasoningTask;
using core::TokenUsage;

// ---------------------------------------------------------------------------
// Load generation
// ---------------------------------------------------------------------------

struct LoadProfile {
  std::string dataset_label = "custom";
  std::vector<ReasoningTask> tasks;
  int concurrency = 1;
  PipelineMode mode = PipelineMode::BaselineFull;
  int warmup_count = 0;  // leading completions excluded from the report
};

struct BenchReport {
  std::string dataset = "custom";
  std::string method = "baseline_full";
  int concurrency = 1;
  double time_per_req_s = 0.0;       // mean(t_last_token - t_submit)
  double avg_tbt_s = 0.0;            // pooled mean over all inter-token gaps
  double avg_tbt_per_req_s = 0.0;    // mean of per-request gap means
  double tokens_per_req = 0.0;       // mean completion tokens per request
  int n = 0;                         // completed requests in the means
  int failed = 0;                    // failed requests, excluded from means
};

struct LoadResult {
  BenchReport report;
  std::vector<PipelineResult> results;  // post-warmup completions, merge order
};

/// Closed-loop driver: `concurrency` workers each hold one request in flight
/// and immediately dispatch the next task on completion, so the in-flight
/// count stays at the concurrency level until the task list drains.
inline LoadResult run_load(const LoadProfile& profile, const pipeline::PipelineConfig& cfg) {
  if (profile.concurrency < 1) throw std::invalid_argument("concurrency must be >= 1");
  const auto& tasks = profile.tasks;

  std::atomic<size_t> next{0};
  std::atomic<int> completed{0};
  std::vector<std::vector<PipelineResult>> buffers(profile.concurrency);

  auto worker = [&](int slot) {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      PipelineResult r = pipeline::run_pipeline(cfg, tasks[i], profile.mode);
      const int order = completed.fetch_add(1);
      if (order >= profile.warmup_count) buffers[slot].push_back(std::move(r));
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(profile.concurrency);
  for (int w = 0; w < profile.concurrency; ++w) pool.emplace_back(worker, w);
  for (auto& t : pool) t.join();

  LoadResult out;
  out.report.dataset = profile.dataset_label;
  out.report.method = to_string(profile.mode);
  out.report.concurrency = profile.concurrency;

  double ttlt_sum = 0.0;
  double gap_sum = 0.0;
  std::int64_t gap_count = 0;
  double per_req_tbt_sum = 0.0;
  int per_req_tbt_n = 0;
  double tokens_sum = 0.0;
  for (auto& buf : buffers) {
    for (auto& r : buf) {
      if (r.failed) {
        ++out.report.failed;
        out.results.push_back(std::move(r));
        continue;
      }
      ++out.report.n;
      ttlt_sum += r.timing.time_to_last_token_s();
      double req_gap_sum = 0.0;
      for (double g : r.timing.inter_token_gaps_s) req_gap_sum += g;
      gap_sum += req_gap_sum;
      gap_count += static_cast<std::int64_t>(r.timing.inter_token_gaps_s.size());
      if (!r.timing.inter_token_gaps_s.empty()) {
        per_req_tbt_sum += req_gap_sum / static_cast<double>(r.timing.inter_token_gaps_s.size());
        ++per_req_tbt_n;
      }
      tokens_sum += static_cast<double>(r.total_usage().completion_tokens);
      out.results.push_back(std::move(r));
    }
  }
  if (out.report.n > 0) {
    out.report.time_per_req_s = ttlt_sum / out.report.n;
    out.report.tokens_per_req = tokens_sum / out.report.n;
  }
  if (gap_count > 0) out.report.avg_tbt_s = gap_sum / static_cast<double>(gap_count);
  if (per_req_tbt_n > 0) out.report.avg_tbt_per_req_s = per_req_tbt_sum / per_req_tbt_n;
  return out;
}

// ---------------------------------------------------------------------------
// Derived arithmetic
// ---------------------------------------------------------------------------

class MismatchedProfiles : public Error {
public:
  using Error::Error;
};

namespace detail {
inline void require_comparable(const BenchReport& a, const BenchReport& b) {
  if (a.dataset != b.dataset || a.concurrency != b.concurrency)
    throw MismatchedProfiles("reports compare different datasets or concurrency levels");
}
}  // namespace detail

/// baseline time per request / variant time per request.
inline double speedup(const BenchReport& baseline, const BenchReport& variant) {
  detail::require_comparable(baseline, variant);
  if (variant.time_per_req_s <= 0.0) throw MismatchedProfiles("variant has no timing data");
  return baseline.time_per_req_s / variant.time_per_req_s;
}

/// variant tokens per request / baseline tokens per request.
inline double token_retention(const BenchReport& baseline, const BenchReport& variant) {
  detail::require_comparable(baseline, variant);
  if (baseline.tokens_per_req <= 0.0) throw MismatchedProfiles("baseline has no token data");
  return variant.tokens_per_req / baseline.tokens_per_req;
}

inline double reduction_pct(const BenchReport& baseline, const BenchReport& variant) {
  return (1.0 - token_retention(baseline, variant)) * 100.0;
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

class MissingPrice : public Error {
public:
  using Error::Error;
};

class ZeroReference : public Error {
public:
  using Error::Error;
};

/// Prices in currency per million tokens.
struct ModelPrice {
  double input_per_m = 0.0;
  double output_per_m = 0.0;
};

struct PriceSheet {
  std::map<std::string, ModelPrice> models;

  const ModelPrice& require(const std::string& model) const {
    auto it = models.find(model);
    if (it == models.end()) throw MissingPrice("no price entry for model: " + model);
    return it->second;
  }
};

/// Exact cost core. Prices are held as integer micro-currency per million
/// tokens, so `tokens * price` is an exact integer in pico-currency and cost
/// is exactly linear in each token count.
struct CostValue {
  std::int64_t picos = 0;  // 1e-12 currency units

  double dollars() const { return static_cast<double>(picos) / 1e12; }
  CostValue& operator+=(const CostValue& o) {
    picos += o.picos;
    return *this;
  }
  friend CostValue operator+(CostValue a, const CostValue& b) { return a += b; }
  friend bool operator==(const CostValue&, const CostValue&) = default;
};

namespace detail {
inline std::int64_t micro_per_m(double price_per_m) {
  if (price_per_m < 0.0) throw std::invalid_argument("prices must be >= 0");
  return std::llround(price_per_m * 1e6);
}
}  // namespace detail

/// T_in * P_in + T_out * P_out for one model's prices.
inline CostValue cost_per_request(const TokenUsage& usage, const ModelPrice& price) {
  CostValue v;
  v.picos = usage.prompt_tokens * detail::micro_per_m(price.input_per_m) +
            usage.completion_tokens * detail::micro_per_m(price.output_per_m);
  return v;
}

/// Multi-stage request: each stage priced with its own model, then summed.
inline CostValue cost_per_request(const std::vector<std::pair<TokenUsage, ModelPrice>>& stages) {
  CostValue v;
  for (const auto& [usage, price] : stages) v += cost_per_request(usage, price);
  return v;
}

struct CostEstimate {
  double cost_per_request_usd = 0.0;
  double total_usd = 0.0;
  std::int64_t request_count = 0;
  std::int64_t cost_per_request_picos = 0;
};

inline CostEstimate estimate_cost(const CostValue& per_request, std::int64_t requests) {
  CostEstimate e;
  e.cost_per_request_picos = per_request.picos;
  e.cost_per_request_usd = per_request.dollars();
  e.request_count = requests;
  e.total_usd = static_cast<double>(per_request.picos * requests) / 1e12;
  return e;
}

/// (reference - variant) / reference, as a fraction.
inline double savings_pct(double reference_cost, double variant_cost) {
  if (reference_cost <= 0.0) throw ZeroReference("reference cost must be > 0");
  return (reference_cost - variant_cost) / reference_cost;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const BenchReport& r) {
  return {{"dataset", r.dataset},
          {"method", r.method},
          {"concurrency", r.concurrency},
          {"time_per_req_s", r.time_per_req_s},
          {"avg_tbt_s", r.avg_tbt_s},
          {"avg_tbt_per_req_s", r.avg_tbt_per_req_s},
          {"tokens_per_req", r.tokens_per_req},
          {"n", r.n},
          {"failed", r.failed}};
}

inline BenchReport bench_report_from_json(const nlohmann::json& j) {
  BenchReport r;
  r.dataset = j.value("dataset", std::string("custom"));
  r.method = j.value("method", std::string("baseline_full"));
  r.concurrency = j.value("concurrency", 1);
  r.time_per_req_s = j.value("time_per_req_s", 0.0);
  r.avg_tbt_s = j.value("avg_tbt_s", 0.0);
  r.avg_tbt_per_req_s = j.value("avg_tbt_per_req_s", 0.0);
  r.tokens_per_req = j.value("tokens_per_req", 0.0);
  r.n = j.value("n", 0);
  r.failed = j.value("failed", 0);
  return r;
}

inline void write_report_csv(std::ostream& os, const std::vector<BenchReport>& rows) {
  os << "dataset,method,concurrency,time_per_req_s,avg_tbt_s,avg_tbt_per_req_s,tokens_per_req,"
        "n,failed\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%.6f,%.6f,%.6f,%.3f,%d,%d\n", r.dataset.c_str(),
                  r.method.c_str(), r.concurrency, r.time_per_req_s, r.avg_tbt_s,
                  r.avg_tbt_per_req_s, r.tokens_per_req, r.n, r.failed);
    os << buf;
  }
}

inline PriceSheet load_price_sheet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open price sheet: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("price sheet is not a JSON object: " + path);
  PriceSheet sheet;
  for (const auto& [model, entry] : j.items()) {
    ModelPrice p;
    p.input_per_m = entry.value("input_per_m", 0.0);
    p.output_per_m = entry.value("output_per_m", 0.0);
    if (p.input_per_m < 0.0 || p.output_per_m < 0.0)
      throw Error("negative price for model: " + model);
    sheet.models[model] = p;
  }
  return sheet;
}

}  // namespace hawkeye::metrics
