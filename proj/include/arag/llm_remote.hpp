/**
 * @file llm_remote.hpp
 * @brief OpenAI-compatible HTTP backends (chat completions and embeddings)
 *        with bounded retries and a concurrency cap.
 */

#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "arag/embed.hpp"
#include "arag/error.hpp"
#include "arag/llm.hpp"

namespace arag {

struct RemoteOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo-0125";
  std::string api_key;  ///< resolved from the environment, never from config files
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  int concurrency_cap = 4;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
};

/// Reads the API key from the named environment variable (empty if unset).
inline std::string api_key_from_env(const std::string& variable = "OPENAI_API_KEY") {
  const char* v = std::getenv(variable.c_str());
  return v == nullptr ? std::string{} : std::string{v};
}

namespace detail {

struct Endpoint {
  std::string origin;  ///< scheme://host[:port]
  std::string prefix;  ///< path prefix, no trailing slash
};

inline Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  ep.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  return ep;
}

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

/// POSTs JSON with bounded retries and exponential backoff. Returns the parsed
/// response body. The payload is never modified between attempts.
inline nlohmann::json post_json(const RemoteOptions& opts, const std::string& path, const nlohmann::json& body,
                                const std::string& agent) {
  const Endpoint ep = split_url(opts.base_url);
  const std::string payload = body.dump();
  std::string last_error;
  auto backoff = opts.initial_backoff;
  const int attempts = std::max(1, opts.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client client(ep.origin);
    client.set_connection_timeout(opts.connect_timeout_s);
    client.set_read_timeout(opts.read_timeout_s);
    if (!opts.api_key.empty()) client.set_bearer_token_auth(opts.api_key);

    auto res = client.Post(ep.prefix + path, payload, "application/json");
    bool retry = true;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      auto parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (!parsed.is_discarded()) return parsed;
      last_error = "response body is not JSON";
    } else {
      last_error = "HTTP " + std::to_string(res->status);
      retry = retryable_status(res->status);
    }
    if (!retry) break;
    if (attempt < attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw BackendError(agent, "POST " + ep.prefix + path + " failed: " + last_error);
}

}  // namespace detail

/// Chat completions against an OpenAI-style endpoint.
class RemoteBackend final : public ChatBackend {
 public:
  explicit RemoteBackend(RemoteOptions options)
      : options_(std::move(options)), slots_(std::max(1, options_.concurrency_cap)) {}

  ChatResponse complete(const ChatRequest& request) override {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    const nlohmann::json body = {
        {"model", request.model_tag.empty() ? options_.model : request.model_tag},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };

    slots_.acquire();
    nlohmann::json reply;
    try {
      reply = detail::post_json(options_, "/chat/completions", body, request.agent);
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();

    const auto* choices = reply.contains("choices") ? &reply["choices"] : nullptr;
    if (choices == nullptr || !choices->is_array() || choices->empty() ||
        !(*choices)[0].contains("message") || !(*choices)[0]["message"].contains("content") ||
        !(*choices)[0]["message"]["content"].is_string()) {
      throw BackendError(request.agent, "chat completion response has no choices[0].message.content");
    }
    ChatResponse out;
    out.text = (*choices)[0]["message"]["content"].get<std::string>();
    if (reply.contains("usage") && reply["usage"].is_object()) {
      out.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
      out.completion_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
    } else {
      out.prompt_tokens = estimate_tokens(request.messages);
      out.completion_tokens = estimate_tokens(out.text);
    }
    return out;
  }

  std::string kind() const override { return "remote"; }
  const RemoteOptions& options() const noexcept { return options_; }

 private:
  RemoteOptions options_;
  std::counting_semaphore<> slots_;
};

/// f_Emb served by an OpenAI-style /embeddings endpoint.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(RemoteOptions options, std::size_t dimension)
      : options_(std::move(options)), dimension_(dimension) {}

  std::size_t dimension() const noexcept override { return dimension_; }

  EmbeddingVector embed(std::string_view text) const override {
    if (text.empty()) return EmbeddingVector(dimension_, 0.0);
    const nlohmann::json body = {{"model", options_.model}, {"input", std::string(text)}};
    const auto reply = detail::post_json(options_, "/embeddings", body, "embedder");
    if (!reply.contains("data") || !reply["data"].is_array() || reply["data"].empty() ||
        !reply["data"][0].contains("embedding")) {
      throw BackendError("embedder", "embedding response has no data[0].embedding");
    }
    auto v = reply["data"][0]["embedding"].get<EmbeddingVector>();
    if (v.size() != dimension_) {
      throw BackendError("embedder", "embedding has dimension " + std::to_string(v.size()) + ", expected " +
                                         std::to_string(dimension_));
    }
    return v;
  }

 private:
  RemoteOptions options_;
  std::size_t dimension_;
};

}  // namespace arag
