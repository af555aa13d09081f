/**
 * @file llm.hpp
 * @brief Chat-completion transport shared by all agents: request digests,
 *        the backend interface, a scripted mock, and record/replay cassettes.
 *
 * The HTTP backend lives in llm_remote.hpp so that code which only needs the
 * offline backends does not pull in cpp-httplib.
 */

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/corpus.hpp"
#include "arag/embed.hpp"
#include "arag/error.hpp"
#include "arag/hash.hpp"

namespace arag {

struct ChatMessage {
  std::string role;  ///< "system" or "user"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 256;
  std::string model_tag;
  /// Calling agent role, used for error messages and by simulated backends.
  /// Not part of the digest.
  std::string agent;
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const ChatResponse&) const = default;
};

/// Stable digest of the ordered (role, content) pairs. max_tokens, model_tag,
/// temperature and agent are ignored so prompt-identical calls collapse.
inline std::string request_digest(const std::vector<ChatMessage>& messages) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& m : messages) pairs.push_back(nlohmann::json::array({m.role, m.content}));
  return sha256_hex(detail::dump(pairs));
}

inline std::string request_digest(const ChatRequest& request) { return request_digest(request.messages); }

/// Rough token count used when a backend does not report usage.
inline std::int64_t estimate_tokens(std::string_view text) {
  return static_cast<std::int64_t>(tokenize(text).size());
}

inline std::int64_t estimate_tokens(const std::vector<ChatMessage>& messages) {
  std::int64_t n = 0;
  for (const auto& m : messages) n += estimate_tokens(m.content);
  return n;
}

/// complete() must be safe for concurrent callers.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string kind() const = 0;
};

/// Scripted responses keyed by request digest.
///
/// Lookup order: scripted digest, then (unless strict) the responder
/// callback, then the default text.
class MockBackend final : public ChatBackend {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  MockBackend() = default;
  explicit MockBackend(Responder responder) : responder_(std::move(responder)) {}

  void script(const std::string& digest, std::string text) { script_[digest] = std::move(text); }
  void script(const ChatRequest& request, std::string text) { script(request_digest(request), std::move(text)); }
  void set_strict(bool strict) noexcept { strict_ = strict; }
  void set_default(std::string text) { default_text_ = std::move(text); }
  void set_responder(Responder responder) { responder_ = std::move(responder); }

  /// Loads {digest, response_text} lines (the cassette format).
  void load_script(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    detail::for_each_jsonl(in, [&](const nlohmann::json& obj, std::size_t) {
      script(obj.at("digest").get<std::string>(), obj.at("response_text").get<std::string>());
    });
  }

  ChatResponse complete(const ChatRequest& request) override {
    ++calls_;
    const std::string digest = request_digest(request);
    std::string text;
    if (auto it = script_.find(digest); it != script_.end()) {
      text = it->second;
    } else if (strict_) {
      throw BackendError(request.agent, "mock: no scripted response for digest " + digest);
    } else if (responder_) {
      text = responder_(request);
    } else {
      text = default_text_;
    }
    return {text, estimate_tokens(request.messages), estimate_tokens(text)};
  }

  std::string kind() const override { return "mock"; }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::unordered_map<std::string, std::string> script_;
  Responder responder_;
  std::string default_text_;
  bool strict_ = false;
  std::atomic<std::size_t> calls_{0};
};

struct CassetteEntry {
  std::string digest;
  ChatResponse response;
};

/// Digest -> response map persisted as JSONL
/// {digest, response_text, prompt_tokens, completion_tokens}. Appends are
/// serialized; a digest is written at most once.
class Cassette {
 public:
  Cassette() = default;

  explicit Cassette(std::filesystem::path path, bool load_existing = true) : path_(std::move(path)) {
    if (load_existing && std::filesystem::exists(path_)) load(path_);
  }

  Cassette(Cassette&& other) noexcept {
    std::lock_guard lock(other.mutex_);
    path_ = std::move(other.path_);
    entries_ = std::move(other.entries_);
    index_ = std::move(other.index_);
  }

  static Cassette read(const std::filesystem::path& path) {
    Cassette c;
    c.load(path);
    return c;
  }

  std::optional<ChatResponse> find(const std::string& digest) const {
    std::lock_guard lock(mutex_);
    auto it = index_.find(digest);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].response;
  }

  /// Returns the stored response: the existing one if the digest was already
  /// present, otherwise the given one (which is then persisted).
  ChatResponse insert(const std::string& digest, const ChatResponse& response) {
    std::lock_guard lock(mutex_);
    if (auto it = index_.find(digest); it != index_.end()) return entries_[it->second].response;
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app);
      if (!out) throw DataError("cannot append to cassette " + path_.string());
      out << detail::dump(entry_json(digest, response)) << '\n';
      if (!out) throw DataError("write failed: " + path_.string());
    }
    index_.emplace(digest, entries_.size());
    entries_.push_back({digest, response});
    return response;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  std::vector<CassetteEntry> entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
  }

  static nlohmann::json entry_json(const std::string& digest, const ChatResponse& r) {
    return {{"digest", digest},
            {"response_text", r.text},
            {"prompt_tokens", r.prompt_tokens},
            {"completion_tokens", r.completion_tokens}};
  }

 private:
  void load(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    try {
      detail::for_each_jsonl(in, [&](const nlohmann::json& obj, std::size_t) {
        ChatResponse r;
        r.text = obj.at("response_text").get<std::string>();
        r.prompt_tokens = obj.value("prompt_tokens", std::int64_t{0});
        r.completion_tokens = obj.value("completion_tokens", std::int64_t{0});
        std::string digest = obj.at("digest").get<std::string>();
        if (index_.emplace(digest, entries_.size()).second) entries_.push_back({std::move(digest), r});
      });
    } catch (const DataError& e) {
      throw DataError("cassette " + path.string() + ": " + e.what());
    }
  }

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<CassetteEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Wraps a backend and records every (digest, response) pair. Repeated
/// requests are answered from the cassette without calling the inner backend.
class RecordingBackend final : public ChatBackend {
 public:
  RecordingBackend(ChatBackend& inner, const std::filesystem::path& cassette_path)
      : inner_(inner), cassette_(cassette_path) {}

  ChatResponse complete(const ChatRequest& request) override {
    const std::string digest = request_digest(request);
    if (auto hit = cassette_.find(digest)) return *hit;
    return cassette_.insert(digest, inner_.complete(request));
  }

  std::string kind() const override { return "record"; }
  const Cassette& cassette() const noexcept { return cassette_; }

 private:
  ChatBackend& inner_;
  Cassette cassette_;
};

/// Answers strictly from a recorded cassette.
class ReplayBackend final : public ChatBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& cassette_path) : cassette_(Cassette::read(cassette_path)) {}
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}

  ChatResponse complete(const ChatRequest& request) override {
    const std::string digest = request_digest(request);
    if (auto hit = cassette_.find(digest)) return *hit;
    throw BackendError(request.agent, "replay: cassette miss for digest " + digest);
  }

  std::string kind() const override { return "replay"; }
  const Cassette& cassette() const noexcept { return cassette_; }

 private:
  Cassette cassette_;
};

}  // namespace arag
