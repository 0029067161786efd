#pragma once

// Deterministic in-process chat-completion server for offline tests and
// benchmarks. Serves the same wire protocol as a real endpoint, with scripted
// content, per-chunk delays, failure injection, and probe counters for
// concurrency assertions.

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "hawkeye/backend.hpp"
#include "hawkeye/core.hpp"

namespace hawkeye::backend {

/// One scripted response. `match` is a list of substrings that must all
/// appear in the concatenated message contents; {"*"} matches anything.
/// Entries are tried in order, first match wins.
struct ScriptEntry {
  std::vector<std::string> match{"*"};
  std::string content;
  int per_chunk_delay_ms = 0;
  std::vector<int> chunk_sizes;            // byte counts, cycled; empty = single chunk
  std::optional<core::TokenUsage> usage;   // scripted usage; default = byte estimate
  int fail_first = 0;                      // abort this many connections before serving
  int status = 200;                        // non-200: respond with this HTTP status
  int abort_after_chunks = -1;             // >=0: drop the stream after N chunks
  bool keepalive_deltas = false;           // interleave empty-delta events between chunks
  std::string raw_body;                    // non-empty: return verbatim (protocol-error tests)
};

class MockBackend {
public:
  explicit MockBackend(std::vector<ScriptEntry> script, std::string model_name = "mock-model")
      : script_(std::move(script)), model_name_(std::move(model_name)) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(160); };
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockBackend() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  MockBackend(const MockBackend&) = delete;
  MockBackend& operator=(const MockBackend&) = delete;

  int port() const { return port_; }

  BackendConfig config() const {
    BackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port_);
    cfg.model_name = model_name_;
    cfg.retry_base_ms = 1;  // keep test retries fast; real default stays 500
    return cfg;
  }

  // --- probes -------------------------------------------------------------

  int max_in_flight() const { return max_in_flight_.load(); }
  int unmatched_count() const { return unmatched_.load(); }
  int request_count() const { return requests_.load(); }

  /// Gauge value observed at the start of each request, in arrival order.
  std::vector<int> in_flight_samples() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return samples_;
  }

  /// Number of completed (fully served) responses per X-Request-Id.
  int completions_for(const std::string& request_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = completions_.find(request_id);
    return it == completions_.end() ? 0 : it->second;
  }

  std::vector<std::string> received_bodies() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return bodies_;
  }

  std::vector<std::string> received_auth_headers() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return auth_headers_;
  }

  std::vector<std::string> received_request_ids() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return request_ids_;
  }

private:
  struct InFlightGuard {
    explicit InFlightGuard(MockBackend* m) : mock(m) {}
    ~InFlightGuard() {
      if (mock) mock->in_flight_.fetch_sub(1);
    }
    InFlightGuard(const InFlightGuard&) = delete;
    MockBackend* mock;
  };

  static std::string concat_contents(const nlohmann::json& body) {
    std::string all;
    if (body.contains("messages") && body["messages"].is_array()) {
      for (const auto& m : body["messages"]) {
        if (m.contains("content") && m["content"].is_string())
          all += m["content"].get<std::string>() + "\n";
      }
    }
    return all;
  }

  const ScriptEntry* find_entry(const std::string& haystack) {
    for (auto& entry : script_) {
      bool ok = true;
      for (const auto& needle : entry.match) {
        if (needle == "*") continue;
        if (haystack.find(needle) == std::string::npos) {
          ok = false;
          break;
        }
      }
      if (ok) return &entry;
    }
    return nullptr;
  }

  static std::vector<std::string> split_chunks(const std::string& content,
                                               const std::vector<int>& sizes) {
    std::vector<std::string> chunks;
    if (content.empty()) return chunks;
    if (sizes.empty()) {
      chunks.push_back(content);
      return chunks;
    }
    size_t pos = 0, i = 0;
    while (pos < content.size()) {
      const int want = sizes[std::min(i, sizes.size() - 1)];
      const size_t n = std::min<size_t>(std::max(want, 1), content.size() - pos);
      chunks.push_back(content.substr(pos, n));
      pos += n;
      ++i;
    }
    return chunks;
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    requests_.fetch_add(1);
    const int now_in_flight = in_flight_.fetch_add(1) + 1;
    auto guard = std::make_shared<InFlightGuard>(this);
    int prev_max = max_in_flight_.load();
    while (now_in_flight > prev_max &&
           !max_in_flight_.compare_exchange_weak(prev_max, now_in_flight)) {
    }

    const std::string request_id = req.get_header_value("X-Request-Id");
    {
      std::lock_guard<std::mutex> lock(mutex_);
      samples_.push_back(now_in_flight);
      bodies_.push_back(req.body);
      auth_headers_.push_back(req.get_header_value("Authorization"));
      request_ids_.push_back(request_id);
    }

    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      res.status = 400;
      res.set_content("{\"error\":\"bad json\"}", "application/json");
      return;
    }
    const bool stream = body.value("stream", false);
    const std::string haystack = concat_contents(body);

    ScriptEntry* entry = const_cast<ScriptEntry*>(find_entry(haystack));
    if (!entry) {
      unmatched_.fetch_add(1);
      res.status = 404;
      res.set_content("{\"error\":\"unmatched prompt\"}", "application/json");
      return;
    }

    bool fail_this_one = false;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (entry->fail_first > 0) {
        --entry->fail_first;
        fail_this_one = true;
      }
    }
    if (fail_this_one) {
      // Abort the connection without a usable body: transport failure for the client.
      res.set_content_provider(
          16, "application/json",
          [guard](size_t, size_t, httplib::DataSink&) { return false; });
      return;
    }

    if (entry->status != 200) {
      res.status = entry->status;
      res.set_content("{\"error\":\"scripted status\"}", "application/json");
      return;
    }

    if (!entry->raw_body.empty()) {
      res.set_content(entry->raw_body, "application/json");
      return;
    }

    core::TokenUsage usage;
    if (entry->usage) {
      usage = *entry->usage;
    } else {
      usage.prompt_tokens = core::estimate_tokens(haystack);
      usage.completion_tokens = core::estimate_tokens(entry->content);
    }

    if (!stream) {
      if (entry->per_chunk_delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(
            entry->per_chunk_delay_ms *
            static_cast<int>(std::max<size_t>(1, split_chunks(entry->content,
                                                              entry->chunk_sizes).size()))));
      }
      nlohmann::json out = {
          {"id", "mock-cmpl"},
          {"object", "chat.completion"},
          {"model", model_name_},
          {"choices",
           nlohmann::json::array(
               {{{"index", 0},
                 {"message", {{"role", "assistant"}, {"content", entry->content}}},
                 {"finish_reason", "stop"}}})},
          {"usage",
           {{"prompt_tokens", usage.prompt_tokens},
            {"completion_tokens", usage.completion_tokens},
            {"total_tokens", usage.total()}}}};
      res.set_content(out.dump(), "application/json");
      record_completion(request_id);
      return;
    }

    // Streaming: emit one SSE event per chunk with the scripted delay before
    // each chunk, then a final usage event and the end-of-stream sentinel.
    auto chunks = std::make_shared<std::vector<std::string>>(
        split_chunks(entry->content, entry->chunk_sizes));
    const int delay_ms = entry->per_chunk_delay_ms;
    const int abort_after = entry->abort_after_chunks;
    const bool keepalives = entry->keepalive_deltas;
    const std::string model = model_name_;
    auto usage_copy = usage;
    auto self = this;

    res.set_chunked_content_provider(
        "text/event-stream",
        [guard, chunks, delay_ms, abort_after, keepalives, model, usage_copy, self,
         request_id](size_t, httplib::DataSink& sink) {
          auto event = [&](const nlohmann::json& payload) {
            const std::string line = "data: " + payload.dump() + "\n\n";
            return sink.write(line.data(), line.size());
          };
          auto delta_event = [&](const std::string& piece) {
            return event({{"id", "mock-cmpl"},
                          {"object", "chat.completion.chunk"},
                          {"model", model},
                          {"choices",
                           nlohmann::json::array({{{"index", 0},
                                                   {"delta", {{"content", piece}}},
                                                   {"finish_reason", nullptr}}})}});
          };
          int sent = 0;
          for (const auto& piece : *chunks) {
            if (abort_after >= 0 && sent >= abort_after) return false;  // drop connection
            if (delay_ms > 0)
              std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            if (keepalives && !delta_event("")) return false;
            if (!delta_event(piece)) return false;
            ++sent;
          }
          if (abort_after >= 0 && static_cast<size_t>(abort_after) >= chunks->size() &&
              abort_after <= sent) {
            return false;
          }
          event({{"id", "mock-cmpl"},
                 {"object", "chat.completion.chunk"},
                 {"model", model},
                 {"choices", nlohmann::json::array()},
                 {"usage",
                  {{"prompt_tokens", usage_copy.prompt_tokens},
                   {"completion_tokens", usage_copy.completion_tokens},
                   {"total_tokens", usage_copy.total()}}}});
          const std::string done = "data: [DONE]\n\n";
          sink.write(done.data(), done.size());
          sink.done();
          self->record_completion(request_id);
          return true;
        });
  }

  void record_completion(const std::string& request_id) {
    if (request_id.empty()) return;
    std::lock_guard<std::mutex> lock(mutex_);
    ++completions_[request_id];
  }

  std::vector<ScriptEntry> script_;
  std::string model_name_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;

  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<int> unmatched_{0};
  std::atomic<int> requests_{0};
  mutable std::mutex mutex_;
  std::vector<int> samples_;
  std::vector<std::string> bodies_;
  std::vector<std::string> auth_headers_;
  std::vector<std::string> request_ids_;
  std::map<std::string, int> completions_;
};

/// Loads a script from JSON: an array of entries mirroring ScriptEntry.
inline std::vector<ScriptEntry> load_script_json(const nlohmann::json& arr) {
  std::vector<ScriptEntry> script;
  for (const auto& e : arr) {
    ScriptEntry entry;
    if (e.contains("match")) {
      entry.match.clear();
      if (e["match"].is_string()) {
        entry.match.push_back(e["match"].get<std::string>());
      } else {
        for (const auto& m : e["match"]) entry.match.push_back(m.get<std::string>());
      }
    }
    entry.content = e.value("content", std::string());
    entry.per_chunk_delay_ms = e.value("per_chunk_delay_ms", 0);
    if (e.contains("chunk_sizes"))
      entry.chunk_sizes = e["chunk_sizes"].get<std::vector<int>>();
    if (e.contains("usage")) {
      core::TokenUsage u;
      u.prompt_tokens = e["usage"].value("prompt_tokens", std::int64_t{0});
      u.completion_tokens = e["usage"].value("completion_tokens", std::int64_t{0});
      entry.usage = u;
    }
    entry.fail_first = e.value("fail_first", 0);
    entry.status = e.value("status", 200);
    entry.abort_after_chunks = e.value("abort_after_chunks", -1);
    entry.keepalive_deltas = e.value("keepalive_deltas", false);
    entry.raw_body = e.value("raw_body", std::string());
    script.push_back(std::move(entry));
  }
  return script;
}

}  // namespace hawkeye::backend
