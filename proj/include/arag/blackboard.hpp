/**
 * @file blackboard.hpp
 * @brief Append-only shared memory through which the agents exchange messages.
 *
 * Reads are returned in canonical (stage, role, id) order, so the view seen by
 * downstream agents does not depend on the arrival order of concurrent posts.
 * Timestamps are kept as metadata only.
 */

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/error.hpp"
#include "arag/json_text.hpp"

namespace arag {

enum class AgentRole { user_understanding = 0, nli = 1, context_summary = 2, item_ranker = 3 };

inline std::string_view to_string(AgentRole role) {
  switch (role) {
    case AgentRole::user_understanding: return "user_understanding";
    case AgentRole::nli: return "nli";
    case AgentRole::context_summary: return "context_summary";
    case AgentRole::item_ranker: return "item_ranker";
  }
  return "unknown";
}

inline std::optional<AgentRole> parse_role(std::string_view s) {
  for (auto r : {AgentRole::user_understanding, AgentRole::nli, AgentRole::context_summary,
                 AgentRole::item_ranker}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

/// Protocol step in which each role posts: 1 parallel inference, 2 cross-agent
/// attention, 3 final ranking.
inline int protocol_stage(AgentRole role) {
  switch (role) {
    case AgentRole::user_understanding:
    case AgentRole::nli: return 1;
    case AgentRole::context_summary: return 2;
    case AgentRole::item_ranker: return 3;
  }
  return 0;
}

struct Message {
  std::string id;  ///< assigned by the board when empty
  AgentRole role = AgentRole::user_understanding;
  std::string content;  ///< plain text or JSON text
  std::optional<double> score;
  std::int64_t timestamp = 0;  ///< milliseconds
  int stage = 0;

  bool operator==(const Message&) const = default;
};

inline bool canonical_less(const Message& a, const Message& b) {
  return std::tuple(a.stage, static_cast<int>(a.role), std::string_view(a.id)) <
         std::tuple(b.stage, static_cast<int>(b.role), std::string_view(b.id));
}

inline nlohmann::json to_json(const Message& m) {
  nlohmann::json j;
  j["id"] = m.id;
  j["role"] = std::string(to_string(m.role));
  j["content"] = m.content;
  j["score"] = m.score ? nlohmann::json(*m.score) : nlohmann::json(nullptr);
  j["timestamp"] = m.timestamp;
  j["stage"] = m.stage;
  return j;
}

class Blackboard {
 public:
  using Clock = std::function<std::int64_t()>;

  /// Wall-clock milliseconds since the epoch.
  static std::int64_t system_millis() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }

  Blackboard() : clock_(&Blackboard::system_millis) {}
  explicit Blackboard(Clock clock) : clock_(std::move(clock)) {}

  Blackboard(const Blackboard& other) {
    std::lock_guard lock(other.mutex_);
    log_ = other.log_;
    ids_ = other.ids_;
    next_id_ = other.next_id_;
    clock_ = other.clock_;
  }

  Blackboard& operator=(const Blackboard& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    log_ = other.log_;
    ids_ = other.ids_;
    next_id_ = other.next_id_;
    clock_ = other.clock_;
    return *this;
  }

  /// Appends a message and returns its id. A message with an empty id gets the
  /// next value of the board's counter; a timestamp of 0 is filled from the clock.
  std::string post(Message message) {
    validate(message);
    std::lock_guard lock(mutex_);
    if (message.id.empty()) {
      do {
        message.id = "m" + pad(next_id_++);
      } while (ids_.count(message.id) != 0);
    } else if (ids_.count(message.id) != 0) {
      throw DataError("blackboard: duplicate message id \"" + message.id + "\"");
    }
    if (message.timestamp == 0) message.timestamp = clock_();
    ids_.insert(message.id);
    log_.push_back(message);
    return message.id;
  }

  /// All messages (optionally of one role) in canonical order. Pure.
  std::vector<Message> read(std::optional<AgentRole> role = std::nullopt) const {
    std::vector<Message> out;
    {
      std::lock_guard lock(mutex_);
      out.reserve(log_.size());
      for (const auto& m : log_) {
        if (!role || m.role == *role) out.push_back(m);
      }
    }
    std::sort(out.begin(), out.end(), canonical_less);
    return out;
  }

  /// Messages in arrival order.
  std::vector<Message> arrival_log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return log_.size();
  }

 private:
  static void validate(const Message& m) {
    const int r = static_cast<int>(m.role);
    if (r < 0 || r > 3) throw DataError("blackboard: invalid role " + std::to_string(r));
    if (m.score && !std::isfinite(*m.score)) throw DataError("blackboard: non-finite score");
    if (m.role == AgentRole::nli && !m.score) throw DataError("blackboard: nli messages must carry a score");
  }

  static std::string pad(std::uint64_t n) {
    std::string s = std::to_string(n);
    return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
  }

  mutable std::mutex mutex_;
  std::vector<Message> log_;
  std::unordered_set<std::string> ids_;
  std::uint64_t next_id_ = 1;
  Clock clock_;
};

/// Trace document: JSONL, one message per line in canonical order, with
/// exactly the fields {id, role, content, score, timestamp, stage}.
inline std::string serialize(const Blackboard& board) {
  std::string out;
  for (const auto& m : board.read()) {
    out += detail::dump(to_json(m));
    out += '\n';
  }
  return out;
}

/// Rebuilds a board from a trace. Throws DataError (with the byte offset of
/// the offending line) on malformed JSON, unknown fields, an unknown role,
/// or a stage that does not match the role's protocol step.
inline Blackboard replay(std::string_view trace) {
  Blackboard board([] { return std::int64_t{0}; });
  std::size_t offset = 0;
  std::size_t lineno = 0;
  while (offset < trace.size()) {
    std::size_t end = trace.find('\n', offset);
    const bool terminated = end != std::string_view::npos;
    if (!terminated) end = trace.size();
    const std::string_view line = trace.substr(offset, end - offset);
    ++lineno;
    const std::string where = "trace line " + std::to_string(lineno) + " (byte offset " + std::to_string(offset) + ")";

    if (!line.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(where + ": malformed JSON at byte offset " + std::to_string(offset + (e.byte > 0 ? e.byte - 1 : 0)) + ": " +
                        e.what());
      }
      if (!j.is_object() || j.size() != 6) throw DataError(where + ": expected an object with 6 fields");
      Message m;
      try {
        m.id = j.at("id").get<std::string>();
        const auto role = parse_role(j.at("role").get<std::string>());
        if (!role) throw DataError(where + ": unknown role");
        m.role = *role;
        m.content = j.at("content").get<std::string>();
        if (!j.at("score").is_null()) m.score = j.at("score").get<double>();
        m.timestamp = j.at("timestamp").get<std::int64_t>();
        m.stage = j.at("stage").get<int>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": " + e.what());
      }
      if (m.id.empty()) throw DataError(where + ": empty message id");
      if (m.stage != protocol_stage(m.role)) {
        throw DataError(where + ": stage " + std::to_string(m.stage) + " is invalid for role " +
                        std::string(to_string(m.role)));
      }
      try {
        board.post(std::move(m));
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    } else if (terminated) {
      throw DataError(where + ": empty line");
    }
    offset = terminated ? end + 1 : end;
  }
  return board;
}

/// Canonical view with timestamps dropped; equal across runs that differ only
/// in wall-clock timing or post arrival order.
inline std::vector<Message> timeless_view(const Blackboard& board) {
  auto view = board.read();
  for (auto& m : view) m.timestamp = 0;
  return view;
}

}  // namespace arag
