#pragma once

// Chat-completion client: blocking and streaming calls against any server
// speaking the de-facto /v1/chat/completions JSON protocol. Streaming uses
// server-sent events and records one wall-clock timestamp per non-empty
// content delta, which is the timing substrate for the latency metrics.

#include <chrono>
#include <cstdlib>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "hawkeye/core.hpp"

namespace hawkeye::backend {

using json = nlohmann::json;

struct BackendConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name = "default";
  std::string api_key_env;        // name of env var holding the key; may be empty
  int request_timeout_ms = 120000;
  int max_retries = 2;            // capped at 5
  double default_temperature = 0.0;
  int default_max_tokens = 2048;
  int retry_base_ms = 500;        // backoff: retry_base_ms * 2^attempt
};

enum class Role { System, User, Assistant };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 2048;
  bool stream = false;
};

struct ChatResponse {
  std::string content;
  std::optional<core::TokenUsage> usage;
  // One timestamp per received non-empty content chunk, non-decreasing.
  std::vector<core::Clock::time_point> token_events;
};

class TransportError : public Error {
public:
  using Error::Error;
};

class ProtocolError : public Error {
public:
  using Error::Error;
};

class ServerError : public Error {
public:
  ServerError(int status, const std::string& body_excerpt)
      : Error("server returned HTTP " + std::to_string(status) + ": " + body_excerpt),
        status(status),
        body_excerpt(body_excerpt) {}
  int status;
  std::string body_excerpt;
};

/// Connection dropped mid-stream; carries whatever arrived before the drop.
class StreamAbort : public Error {
public:
  explicit StreamAbort(ChatResponse partial_response)
      : Error("stream aborted after " +
              std::to_string(partial_response.token_events.size()) + " chunks"),
        partial(std::move(partial_response)) {}
  ChatResponse partial;
};

namespace detail {

struct ParsedUrl {
  std::string host;
  int port = 80;
};

inline ParsedUrl parse_base_url(const std::string& url) {
  std::string rest = url;
  const std::string http = "http://";
  if (rest.rfind(http, 0) == 0) rest = rest.substr(http.size());
  // strip any trailing path
  if (auto slash = rest.find('/'); slash != std::string::npos) rest = rest.substr(0, slash);
  ParsedUrl out;
  if (auto colon = rest.find(':'); colon != std::string::npos) {
    out.host = rest.substr(0, colon);
    out.port = std::atoi(rest.c_str() + colon + 1);
  } else {
    out.host = rest;
    out.port = 80;
  }
  return out;
}

inline void validate(const BackendConfig& cfg, const ChatRequest& req) {
  if (cfg.request_timeout_ms <= 0) throw std::invalid_argument("request_timeout must be > 0");
  if (cfg.max_retries < 0 || cfg.max_retries > 5)
    throw std::invalid_argument("max_retries must be in [0, 5]");
  if (req.messages.empty()) throw std::invalid_argument("request needs at least one message");
  const Role last = req.messages.back().role;
  if (last == Role::Assistant)
    throw std::invalid_argument("last message role must be user or system");
}

inline std::string request_body(const BackendConfig& cfg, const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages)
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json body = {{"model", cfg.model_name},
               {"messages", messages},
               {"temperature", req.temperature},
               {"max_tokens", req.max_tokens},
               {"stream", req.stream}};
  return body.dump();
}

inline httplib::Headers request_headers(const BackendConfig& cfg, const std::string& request_id) {
  httplib::Headers headers{{"X-Request-Id", request_id}};
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  return headers;
}

inline std::string new_request_id() {
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream os;
  os << "req-" << std::chrono::duration_cast<std::chrono::microseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count()
     << "-" << counter.fetch_add(1);
  return os.str();
}

inline std::string excerpt(const std::string& s, size_t limit = 240) {
  return s.size() <= limit ? s : s.substr(0, limit) + "...";
}

inline core::TokenUsage usage_from_json(const json& u) {
  core::TokenUsage usage;
  usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
  usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
  return usage;
}

/// Incremental SSE line parser. Feed raw bytes; emits the payload of each
/// `data: ...` line. Returns true once the [DONE] sentinel has been seen.
class SseParser {
public:
  template <typename OnData>
  bool feed(const char* data, size_t len, OnData&& on_data) {
    buffer_.append(data, len);
    size_t pos = 0;
    while (true) {
      const auto nl = buffer_.find('\n', pos);
      if (nl == std::string::npos) break;
      std::string line = buffer_.substr(pos, nl - pos);
      pos = nl + 1;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.rfind("data:", 0) != 0) continue;
      std::string payload = core::trim(line.substr(5));
      if (payload == "[DONE]") {
        done_ = true;
        continue;
      }
      if (!payload.empty()) on_data(payload);
    }
    buffer_.erase(0, pos);
    return done_;
  }

  bool done() const { return done_; }

private:
  std::string buffer_;
  bool done_ = false;
};

}  // namespace detail

/// Blocking completion. Retries idempotently on transport failures and HTTP
/// 5xx, with exponential backoff (base retry_base_ms, factor 2).
inline ChatResponse complete(const BackendConfig& cfg, const ChatRequest& req) {
  detail::validate(cfg, req);
  if (req.stream) throw std::invalid_argument("complete() requires stream = false");

  const auto url = detail::parse_base_url(cfg.base_url);
  const std::string body = detail::request_body(cfg, req);
  const std::string request_id = detail::new_request_id();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(cfg.retry_base_ms * (1 << (attempt - 1))));
    }
    httplib::Client cli(url.host, url.port);
    cli.set_connection_timeout(0, cfg.request_timeout_ms * 1000LL);
    cli.set_read_timeout(cfg.request_timeout_ms / 1000, (cfg.request_timeout_ms % 1000) * 1000);
    auto res = cli.Post("/v1/chat/completions", detail::request_headers(cfg, request_id), body,
                        "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // transport failure: retry
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      if (attempt == cfg.max_retries) throw ServerError(res->status, detail::excerpt(res->body));
      continue;
    }
    if (res->status != 200) throw ServerError(res->status, detail::excerpt(res->body));

    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty())
      throw ProtocolError("malformed response body: " + detail::excerpt(res->body));
    ChatResponse out;
    try {
      out.content = parsed["choices"][0]["message"]["content"].get<std::string>();
    } catch (const json::exception&) {
      throw ProtocolError("malformed response body: " + detail::excerpt(res->body));
    }
    if (parsed.contains("usage") && parsed["usage"].is_object())
      out.usage = detail::usage_from_json(parsed["usage"]);
    return out;
  }
  throw TransportError("request failed after " + std::to_string(cfg.max_retries) +
                       " retries: " + last_error);
}

/// Streaming completion over server-sent events. Content is the concatenation
/// of chunk deltas in arrival order; token_events has one timestamp per
/// non-empty delta. A connection dropped mid-stream raises StreamAbort with
/// the partial response attached.
inline ChatResponse complete_streaming(const BackendConfig& cfg, const ChatRequest& req) {
  detail::validate(cfg, req);
  if (!req.stream) throw std::invalid_argument("complete_streaming() requires stream = true");

  const auto url = detail::parse_base_url(cfg.base_url);
  const std::string body = detail::request_body(cfg, req);
  const std::string request_id = detail::new_request_id();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(cfg.retry_base_ms * (1 << (attempt - 1))));
    }
    httplib::Client cli(url.host, url.port);
    cli.set_connection_timeout(0, cfg.request_timeout_ms * 1000LL);
    cli.set_read_timeout(cfg.request_timeout_ms / 1000, (cfg.request_timeout_ms % 1000) * 1000);

    ChatResponse out;
    detail::SseParser parser;
    bool protocol_error = false;
    std::string protocol_detail;
    int http_status = 0;

    httplib::Request hreq;
    hreq.method = "POST";
    hreq.path = "/v1/chat/completions";
    hreq.headers = detail::request_headers(cfg, request_id);
    hreq.body = body;
    hreq.set_header("Content-Type", "application/json");
    hreq.response_handler = [&](const httplib::Response& r) {
      http_status = r.status;
      return true;
    };
    hreq.content_receiver = [&](const char* data, size_t len, std::uint64_t, std::uint64_t) {
      if (http_status != 200) return true;  // collect error body via parser buffer? keep going
      parser.feed(data, len, [&](const std::string& payload) {
        json chunk = json::parse(payload, nullptr, false);
        if (chunk.is_discarded()) {
          protocol_error = true;
          protocol_detail = detail::excerpt(payload);
          return;
        }
        if (chunk.contains("usage") && chunk["usage"].is_object())
          out.usage = detail::usage_from_json(chunk["usage"]);
        if (!chunk.contains("choices") || chunk["choices"].empty()) return;
        const auto& delta = chunk["choices"][0]["delta"];
        if (delta.contains("content") && delta["content"].is_string()) {
          std::string piece = delta["content"].get<std::string>();
          if (!piece.empty()) {
            out.content += piece;
            out.token_events.push_back(core::Clock::now());
          }
        }
      });
      return true;
    };

    auto res = cli.send(hreq);
    if (http_status != 0 && http_status != 200) {
      if (http_status >= 500 && attempt < cfg.max_retries) {
        last_error = "HTTP " + std::to_string(http_status);
        continue;
      }
      throw ServerError(http_status, "streaming request rejected");
    }
    if (protocol_error) throw ProtocolError("malformed stream chunk: " + protocol_detail);
    if (!res) {
      if (!out.token_events.empty()) throw StreamAbort(std::move(out));
      last_error = httplib::to_string(res.error());
      continue;  // nothing received: treat as transport failure and retry
    }
    if (!parser.done() ) {
      // Server closed the connection without the end-of-stream sentinel.
      if (!out.token_events.empty()) throw StreamAbort(std::move(out));
      last_error = "connection closed before any data";
      continue;
    }
    return out;
  }
  throw TransportError("streaming request failed after " + std::to_string(cfg.max_retries) +
                       " retries: " + last_error);
}

/// Dispatches on req.stream.
inline ChatResponse send_chat(const BackendConfig& cfg, const ChatRequest& req) {
  return req.stream ? complete_streaming(cfg, req) : complete(cfg, req);
}

}  // namespace hawkeye::backend
