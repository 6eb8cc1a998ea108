#include "mscore/llm.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "mscore/core.hpp"
#include "mscore/error.hpp"
#include "mscore/records.hpp"

namespace mscore::llm {

namespace fs = std::filesystem;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

Role parse_role(std::string_view s) {
  for (Role r : {Role::system, Role::user, Role::assistant}) {
    if (to_string(r) == s) return r;
  }
  throw Error(ErrorKind::invalid_record, fmt::format("unknown role '{}'", s));
}

void ChatRequest::validate() const {
  if (messages.empty()) throw Error(ErrorKind::invalid_config, "chat request has no messages");
  for (std::size_t i = 1; i < messages.size(); ++i) {
    if (messages[i].role == Role::system) {
      throw Error(ErrorKind::invalid_config, fmt::format("system message at position {}", i));
    }
  }
  if (!(temperature >= 0.0)) throw Error(ErrorKind::invalid_config, "temperature must be >= 0");
  if (max_tokens && *max_tokens <= 0) throw Error(ErrorKind::invalid_config, "max_tokens must be positive");
}

namespace {

ordered_json messages_json(const ChatRequest& request) {
  auto arr = ordered_json::array();
  for (const auto& m : request.messages) {
    arr.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  }
  return arr;
}

ordered_json request_json(const ChatRequest& request) {
  ordered_json j;
  j["model"] = request.model_id;
  j["messages"] = messages_json(request);
  j["temperature"] = request.temperature;
  if (request.max_tokens) j["max_tokens"] = *request.max_tokens;
  return j;
}

bool transient(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

std::string completion_request_body(const ChatRequest& request) { return request_json(request).dump(); }

std::string parse_completion_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::malformed_backend_reply, e.what());
  }
  const json* content = nullptr;
  if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const auto& choice = j["choices"][0];
    if (choice.is_object() && choice.contains("message") && choice["message"].is_object() &&
        choice["message"].contains("content")) {
      content = &choice["message"]["content"];
    }
  }
  if (!content || !content->is_string()) {
    throw Error(ErrorKind::malformed_backend_reply, "missing choices[0].message.content");
  }
  return content->get<std::string>();
}

std::string cache_key(std::string_view backend_id, const ChatRequest& request, unsigned variant) {
  ordered_json j;
  j["backend"] = backend_id;
  j["model"] = request.model_id;
  j["temperature"] = request.temperature;
  j["max_tokens"] = request.max_tokens ? ordered_json(*request.max_tokens) : ordered_json(nullptr);
  auto msgs = ordered_json::array();
  for (const auto& m : request.messages) msgs.push_back({to_string(m.role), m.text});
  j["messages"] = std::move(msgs);
  auto digest = sha256_hex("chat/v1|" + j.dump());
  if (variant > 0) digest = sha256_hex(fmt::format("{}#{}", digest, variant));
  return digest;
}

// ---- scripted ---------------------------------------------------------------

ScriptedTransport::ScriptedTransport(std::vector<ScriptEntry> script) : script_(std::move(script)) {}

std::shared_ptr<ScriptedTransport> ScriptedTransport::from_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::malformed_fixture, fmt::format("cannot open {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::malformed_fixture, fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!j.is_array()) throw Error(ErrorKind::malformed_fixture, "mock script must be a JSON array");
  std::vector<ScriptEntry> entries;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("reply") || !e["reply"].is_string()) {
      throw Error(ErrorKind::malformed_fixture, fmt::format("script entry {} lacks a string reply", i));
    }
    ScriptEntry entry;
    entry.reply = e["reply"].get<std::string>();
    if (e.contains("expect_substring")) entry.expect_substring = e["expect_substring"].get<std::string>();
    if (e.contains("status")) entry.status = e["status"].get<int>();
    entries.push_back(std::move(entry));
  }
  return std::make_shared<ScriptedTransport>(std::move(entries));
}

WireReply ScriptedTransport::send(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  if (next_ >= script_.size()) {
    throw Error(ErrorKind::script_mismatch,
                fmt::format("script exhausted: request {} has no entry", next_));
  }
  const auto& entry = script_[next_];
  bool found = entry.expect_substring.empty();
  for (const auto& m : request.messages) {
    if (found) break;
    found = m.text.find(entry.expect_substring) != std::string::npos;
  }
  if (!found) {
    throw Error(ErrorKind::script_mismatch,
                fmt::format("entry {} expected substring \"{}\"", next_, entry.expect_substring));
  }
  ++next_;
  if (entry.status == 200) return {200, entry.reply, {}};
  return {entry.status, {}, entry.reply};
}

std::size_t ScriptedTransport::consumed() const {
  std::lock_guard lock(mutex_);
  return next_;
}

void ScriptedTransport::verify_exhausted() const {
  std::lock_guard lock(mutex_);
  if (next_ < script_.size()) {
    throw Error(ErrorKind::script_mismatch,
                fmt::format("entry {} never consumed (expected substring \"{}\")", next_,
                            script_[next_].expect_substring));
  }
}

// ---- client -----------------------------------------------------------------

ChatClient::ChatClient(std::string backend_id, std::shared_ptr<Transport> transport,
                       ClientOptions options)
    : backend_id_(std::move(backend_id)),
      transport_(std::move(transport)),
      options_(std::move(options)),
      in_flight_(std::max<std::ptrdiff_t>(1, options_.max_in_flight)) {
  if (!options_.sleeper) {
    options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (options_.retry.max_attempts < 1) throw Error(ErrorKind::invalid_config, "max_attempts must be >= 1");
}

std::size_t ChatClient::wire_calls() const {
  std::lock_guard lock(stats_mutex_);
  return wire_calls_;
}

std::optional<fs::path> ChatClient::cache_path(const ChatRequest& request, unsigned variant) const {
  if (!options_.cache_dir) return std::nullopt;
  auto key = cache_key(backend_id_, request, variant);
  return *options_.cache_dir / backend_id_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ChatClient::cache_lookup(const fs::path& path) const {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    auto j = json::parse(in);
    return j.at("response").at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io_error, fmt::format("corrupt cache entry {}: {}", path.string(), e.what()));
  }
}

void ChatClient::cache_store(const fs::path& path, const std::string& key, const ChatRequest& request,
                             const std::string& text) const {
  static std::atomic<std::uint64_t> counter{0};
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorKind::io_error, fmt::format("cannot create {}: {}", path.parent_path().string(), ec.message()));
  if (fs::exists(path)) return;

  ordered_json j;
  j["key"] = key;
  j["backend_id"] = backend_id_;
  j["request"] = request_json(request);
  j["response"] = {{"text", text}};

  auto tmp = path;
  tmp += fmt::format(".tmp.{}.{}", std::hash<std::thread::id>{}(std::this_thread::get_id()), counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::io_error, fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorKind::io_error, fmt::format("cannot rename into {}: {}", path.string(), ec.message()));
  }
}

ChatResponse ChatClient::complete(const ChatRequest& request, unsigned variant) {
  request.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  };

  const auto key = cache_key(backend_id_, request, variant);
  const auto path = cache_path(request, variant);
  if (path) {
    if (auto text = cache_lookup(*path)) {
      return {std::move(*text), backend_id_, true, elapsed(), 0};
    }
  }

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const auto& policy = options_.retry;
  auto delay = policy.base_delay;
  std::string last_detail;
  for (int attempt = 0; attempt < policy.max_attempts; ++attempt) {
    if (attempt > 0) {
      options_.sleeper(delay);
      delay = std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(delay.count()) * policy.factor));
    }
    {
      std::lock_guard lock(stats_mutex_);
      ++wire_calls_;
    }
    WireReply reply = transport_->send(request);
    if (reply.status == 200) {
      if (path) cache_store(*path, key, request, reply.text);
      return {std::move(reply.text), backend_id_, false, elapsed(), attempt};
    }
    if (reply.status == 401 || reply.status == 403) {
      throw Error(ErrorKind::auth_failure, fmt::format("{} returned HTTP {}", backend_id_, reply.status));
    }
    if (!transient(reply.status)) {
      throw Error(ErrorKind::backend_error,
                  fmt::format("{} returned HTTP {}: {}", backend_id_, reply.status, reply.detail));
    }
    last_detail = reply.status == 0 ? reply.detail : fmt::format("HTTP {}", reply.status);
  }
  throw Error(ErrorKind::rate_limited_exhausted,
              fmt::format("{} failed {} attempts, last: {}", backend_id_, policy.max_attempts, last_detail));
}

double default_temperature(CallRole role, std::string_view model_id) {
  struct Override {
    std::string_view model;
    double temperature;
  };
  // Gemini models emit recitation errors at low temperature.
  static constexpr Override kOverrides[] = {{"gemini-2.0-flash", 1.0}};
  for (const auto& o : kOverrides) {
    if (o.model == model_id) return o.temperature;
  }
  return role == CallRole::judge ? 0.3 : 0.1;
}

}  // namespace mscore::llm
