#pragma once

// Chat-completion backends: a transport that moves one request over the wire
// (HTTP, scripted replay, or an in-process function), and a client that adds
// content-addressed caching, retries with exponential backoff, and a bound on
// in-flight requests.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace mscore::llm {

enum class Role { system, user, assistant };

std::string_view to_string(Role r);
Role parse_role(std::string_view s);

struct Message {
  Role role = Role::user;
  std::string text;

  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  std::optional<int> max_tokens;

  /// Throws Error(invalid_config) on an empty message list, a system message
  /// anywhere but first, a negative temperature or a non-positive max_tokens.
  void validate() const;
};

struct ChatResponse {
  std::string text;
  std::string backend_id;
  bool cached = false;
  std::int64_t latency_ms = 0;
  int retries = 0;
};

/// Outcome of a single wire attempt. status 0 means the request never got an
/// HTTP status (timeout, refused connection) and is treated as transient.
struct WireReply {
  int status = 0;
  std::string text;    // completion text when status == 200
  std::string detail;  // error body or transport message otherwise
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual WireReply send(const ChatRequest& request) = 0;
};

struct HttpBackendConfig {
  std::string endpoint;        // e.g. https://api.openai.com/v1
  std::string credential_env;  // environment variable holding the API key
  std::chrono::seconds timeout{120};
};

/// OpenAI-style chat-completions over HTTP(S). The credential is read from
/// the environment at construction; a missing variable is a config error.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(HttpBackendConfig config);
  WireReply send(const ChatRequest& request) override;

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string base_path_;
  std::string credential_;
};

/// Extracts choices[0].message.content from a chat-completions response body.
/// Throws Error(malformed_backend_reply).
std::string parse_completion_body(std::string_view body);

/// Serializes a request in the chat-completions wire schema.
std::string completion_request_body(const ChatRequest& request);

struct ScriptEntry {
  std::string expect_substring;
  std::string reply;
  int status = 200;
};

/// Replays a fixed script strictly in order. Each request must contain the
/// entry's expect_substring somewhere in its message texts. Running past the
/// end, or a missing substring, throws Error(script_mismatch) naming the entry.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<ScriptEntry> script);

  /// Loads an ordered JSON array of {expect_substring, reply[, status]}.
  static std::shared_ptr<ScriptedTransport> from_file(const std::filesystem::path& path);

  WireReply send(const ChatRequest& request) override;

  std::size_t consumed() const;
  /// Throws Error(script_mismatch) naming the first unconsumed entry.
  void verify_exhausted() const;

 private:
  std::vector<ScriptEntry> script_;
  std::size_t next_ = 0;
  mutable std::mutex mutex_;
};

/// Delegates to a callable; used for deterministic in-process backends.
class FunctionTransport : public Transport {
 public:
  using Fn = std::function<WireReply(const ChatRequest&)>;
  explicit FunctionTransport(Fn fn) : fn_(std::move(fn)) {}
  WireReply send(const ChatRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
};

struct ClientOptions {
  std::optional<std::filesystem::path> cache_dir;  // nullopt disables caching
  RetryPolicy retry;
  std::ptrdiff_t max_in_flight = 4;
  std::function<void(std::chrono::milliseconds)> sleeper;  // defaults to sleep_for
};

/// Hex SHA-256 over backend id, model, temperature, max_tokens and the exact
/// role/text sequence. A nonzero variant yields an independent key for the
/// same request (used when re-asking after an unusable reply).
std::string cache_key(std::string_view backend_id, const ChatRequest& request,
                      unsigned variant = 0);

class ChatClient {
 public:
  ChatClient(std::string backend_id, std::shared_ptr<Transport> transport,
             ClientOptions options = {});

  /// Thread-safe. Errors: auth_failure (401/403), rate_limited_exhausted
  /// (transient failures on every attempt), backend_error (other statuses),
  /// malformed_backend_reply.
  ChatResponse complete(const ChatRequest& request, unsigned variant = 0);

  const std::string& backend_id() const { return backend_id_; }
  /// Number of wire attempts made so far (cache hits excluded).
  std::size_t wire_calls() const;
  std::optional<std::filesystem::path> cache_path(const ChatRequest& request,
                                                  unsigned variant = 0) const;

 private:
  std::optional<std::string> cache_lookup(const std::filesystem::path& path) const;
  void cache_store(const std::filesystem::path& path, const std::string& key,
                   const ChatRequest& request, const std::string& text) const;

  std::string backend_id_;
  std::shared_ptr<Transport> transport_;
  ClientOptions options_;
  std::counting_semaphore<> in_flight_;
  mutable std::mutex stats_mutex_;
  std::size_t wire_calls_ = 0;
};

enum class CallRole { reasoner, judge };

/// 0.1 for reasoners and 0.3 for judges, unless the model has an entry in
/// the per-model override table.
double default_temperature(CallRole role, std::string_view model_id);

}  // namespace mscore::llm
