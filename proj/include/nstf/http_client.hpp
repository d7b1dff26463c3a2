// nstf/http_client.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Chat-completion client over HTTP(S). Request body:
//
//   {"model": "...", "messages": [{"role": "user", "content": PROMPT}],
//    "temperature": 0}
//
// Reply: {"choices": [{"message": {"content": "..."}}]}.

#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "nstf/error.hpp"
#include "nstf/llm_correct.hpp"

namespace nstf {

struct EndpointConfig {
  std::string url;  // e.g. https://api.openai.com/v1/chat/completions
  std::string model = "gpt-4o";
  double timeout_s = 120.0;
  std::string api_key_env = "NSTF_API_KEY";
};

struct ParsedUrl {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw EndpointAbort("endpoint url has no scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    throw EndpointAbort("unsupported endpoint scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.scheme_host_port = url.substr(0, path_start);
  p.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (p.scheme_host_port.size() <= scheme_end + 3) throw EndpointAbort("endpoint url has no host: " + url);
  return p;
}

inline std::string build_request_body(const std::string& model, const std::string& prompt) {
  nlohmann::ordered_json body;
  body["model"] = model;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0;
  return body.dump();
}

/// Extracts choices[0].message.content. Malformed bodies are retryable.
inline std::string parse_completion_body(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("response body is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected response shape: ") + e.what());
  }
}

/// Connection failures and 400/401/403/404 abort the run; timeouts, 408,
/// 429 and 5xx are retryable. The credential is read from the environment
/// and never logged.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.url.empty()) throw EndpointAbort("endpoint.url is not configured");
    url_ = split_url(cfg_.url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (url_.scheme_host_port.rfind("https", 0) == 0)
      throw EndpointAbort("built without TLS support; cannot reach " + url_.scheme_host_port);
#endif
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
  }

  std::string complete(const std::string& prompt) override {
    httplib::Client cli(url_.scheme_host_port);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = cli.Post(url_.path, headers, build_request_body(cfg_.model, prompt), "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Connection || err == httplib::Error::SSLConnection ||
          err == httplib::Error::SSLServerVerification)
        throw EndpointAbort("cannot connect to " + url_.scheme_host_port + ": " + httplib::to_string(err));
      throw TransportError("request failed: " + httplib::to_string(err));
    }
    const int status = res->status;
    if (status == 200) return parse_completion_body(res->body);
    if (status == 400 || status == 401 || status == 403 || status == 404)
      throw EndpointAbort("endpoint rejected request with HTTP " + std::to_string(status));
    throw TransportError("HTTP " + std::to_string(status));
  }

 private:
  EndpointConfig cfg_;
  ParsedUrl url_;
  std::string api_key_;
};

}  // namespace nstf
