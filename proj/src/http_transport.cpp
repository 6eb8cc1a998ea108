#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <regex>

#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/llm.hpp"

namespace mscore::llm {

HttpTransport::HttpTransport(HttpBackendConfig config) : config_(std::move(config)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url)) {
    throw Error(ErrorKind::invalid_config, fmt::format("bad endpoint '{}'", config_.endpoint));
  }
  scheme_host_port_ = m[1].str();
  base_path_ = m[2].str();
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();

  if (!config_.credential_env.empty()) {
    const char* value = std::getenv(config_.credential_env.c_str());
    if (!value || !*value) {
      throw Error(ErrorKind::invalid_config,
                  fmt::format("environment variable {} is not set", config_.credential_env));
    }
    credential_ = value;
  }
}

WireReply HttpTransport::send(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  httplib::Headers headers;
  if (!credential_.empty()) headers.emplace("Authorization", "Bearer " + credential_);

  auto result = client.Post(base_path_ + "/chat/completions", headers, completion_request_body(request),
                            "application/json");
  if (!result) return {0, {}, httplib::to_string(result.error())};
  if (result->status != 200) return {result->status, {}, result->body};
  return {200, parse_completion_body(result->body), {}};
}

}  // namespace mscore::llm
