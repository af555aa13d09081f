/**
 * @file heuristic_backend.hpp
 * @brief Offline stand-in for the LLM that follows each prompt's instructions
 *        with simple title-token arithmetic.
 *
 * It reads the rendered prompt (the section headers of the templates), so it
 * only sees what a real model would see:
 *  - user_understanding: most frequent history title tokens, session lines
 *    weighted up, written as a short summary.
 *  - nli: share of the item's title tokens backed by the weighted history.
 *  - context_summary: title tokens of the listed items weighted by their
 *    alignment scores (or, unscored, of the items that best fit the ordered
 *    user summary).
 *  - item_ranker: candidates ordered by overlap with the summaries, or with
 *    the raw history for the single-prompt baselines.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/embed.hpp"
#include "arag/json_text.hpp"
#include "arag/llm.hpp"

namespace arag {

struct HeuristicOptions {
  double session_weight = 3.0;
  std::size_t summary_tokens = 5;
  std::size_t context_tokens = 4;
  double score_power = 4.0;     ///< emphasis on high-scoring items in the context summary
  double context_weight = 0.5;  ///< ranker weight of context-summary tokens relative to user-summary tokens
  std::size_t fit_items = 3;    ///< context summary: best-fitting items consulted
};

namespace heuristic {

struct PromptItem {
  std::string id;
  std::optional<double> score;
  std::vector<std::string> title;
};

enum class Section { none, long_term, session, history, candidates, user_summary, context_summary, other };

struct ParsedPrompt {
  std::vector<PromptItem> long_term;
  std::vector<PromptItem> session;
  std::vector<PromptItem> history;
  std::vector<PromptItem> candidates;
  std::vector<std::string> user_summary;
  std::vector<std::string> context_summary;
  bool has_history_section = false;
};

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

inline std::vector<std::string> title_tokens(std::string_view text) {
  auto pos = text.find("Title: ");
  if (pos == std::string_view::npos) return {};
  text.remove_prefix(pos + 7);
  auto end = text.find(" | ");
  return tokenize(text.substr(0, end));
}

/// Id inside a leading "[id: X]" (after an optional "- ").
inline std::optional<std::string> bracket_id(std::string_view line) {
  if (starts_with(line, "- ")) line.remove_prefix(2);
  if (!starts_with(line, "[id: ")) return std::nullopt;
  auto close = line.find(']');
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(line.substr(5, close - 5));
}

inline ParsedPrompt parse(const ChatRequest& request) {
  ParsedPrompt p;
  Section section = Section::none;
  for (const auto& message : request.messages) {
    if (message.role != "user") continue;
    std::string_view text = message.content;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      const std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;

      if (starts_with(line, "Long-term history")) { section = Section::long_term; continue; }
      if (starts_with(line, "Current session")) { section = Section::session; continue; }
      if (starts_with(line, "User history")) { section = Section::history; p.has_history_section = true; continue; }
      if (starts_with(line, "Candidate item") || starts_with(line, "Accepted candidate items")) {
        section = Section::candidates;
        continue;
      }
      if (starts_with(line, "User summary")) { section = Section::user_summary; continue; }
      if (starts_with(line, "Context summary")) { section = Section::context_summary; continue; }
      if (starts_with(line, "Instructions") || starts_with(line, "Rank the") || starts_with(line, "Does this") ||
          starts_with(line, "Summarize") || starts_with(line, "Write a") || starts_with(line, "Reply")) {
        section = Section::other;
        continue;
      }

      switch (section) {
        case Section::long_term:
        case Section::session:
        case Section::history: {
          if (auto id = bracket_id(line)) {
            auto& list = section == Section::long_term ? p.long_term
                         : section == Section::session ? p.session
                                                       : p.history;
            list.push_back({*id, std::nullopt, title_tokens(line)});
          }
          break;
        }
        case Section::candidates: {
          if (auto id = bracket_id(line)) {
            PromptItem item{*id, std::nullopt, {}};
            if (auto s = line.find("(alignment score: "); s != std::string_view::npos) {
              item.score = std::strtod(std::string(line.substr(s + 18)).c_str(), nullptr);
            }
            p.candidates.push_back(std::move(item));
          } else if (starts_with(line, "Title: ") && !p.candidates.empty()) {
            p.candidates.back().title = title_tokens(line);
          }
          break;
        }
        case Section::user_summary:
          for (auto& t : tokenize(line)) p.user_summary.push_back(std::move(t));
          break;
        case Section::context_summary:
          for (auto& t : tokenize(line)) p.context_summary.push_back(std::move(t));
          break;
        default: break;
      }
    }
  }
  return p;
}

using Weights = std::map<std::string, double>;

/// Tokens by weight desc, then alphabetically.
inline std::vector<std::string> top_tokens(const Weights& w, std::size_t n) {
  std::vector<std::pair<std::string, double>> v(w.begin(), w.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size() && out.size() < n; ++i) {
    if (v[i].second > 0) out.push_back(v[i].first);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& t : v) s += (s.empty() ? "" : ", ") + t;
  return s;
}

inline Weights history_weights(const ParsedPrompt& p, double session_weight) {
  Weights w;
  for (const auto& x : p.long_term) for (const auto& t : x.title) w[t] += 1.0;
  for (const auto& x : p.session) for (const auto& t : x.title) w[t] += session_weight;
  for (const auto& x : p.history) for (const auto& t : x.title) w[t] += 1.0;
  return w;
}

inline std::size_t overlap(const std::vector<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& t : a) n += b.count(t);
  return n;
}

/// Candidate ids by descending score; ties keep prompt order.
inline std::string ranking_reply(const std::vector<PromptItem>& candidates, const std::vector<double>& scores,
                                 std::string_view explanation) {
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  nlohmann::json ids = nlohmann::json::array();
  for (auto i : order) ids.push_back(candidates[i].id);
  return detail::dump({{"ranking", ids}, {"explanation", explanation}});
}

}  // namespace heuristic

class HeuristicBackend final : public ChatBackend {
 public:
  explicit HeuristicBackend(HeuristicOptions opts = {}) : opts_(opts) {}

  ChatResponse complete(const ChatRequest& request) override {
    std::string text = respond(request);
    return {text, estimate_tokens(request.messages), estimate_tokens(text)};
  }

  std::string kind() const override { return "heuristic"; }

  std::string respond(const ChatRequest& request) const {
    using namespace heuristic;
    const ParsedPrompt p = parse(request);
    if (request.agent == "user_understanding") {
      return "User likes: " + join(top_tokens(history_weights(p, opts_.session_weight), opts_.summary_tokens)) + ".";
    }
    if (request.agent == "nli") return nli(p);
    if (request.agent == "context_summary") return context(p);
    if (request.agent == "item_ranker") return p.has_history_section ? baseline(p) : rank(p);
    return "";
  }

 private:
  std::string nli(const heuristic::ParsedPrompt& p) const {
    using namespace heuristic;
    const Weights w = history_weights(p, opts_.session_weight);
    double score = 0.0;
    if (!p.candidates.empty() && !p.candidates.front().title.empty()) {
      const auto& title = p.candidates.front().title;
      std::vector<double> all;
      for (const auto& [t, v] : w) all.push_back(v);
      std::sort(all.rbegin(), all.rend());
      double best = 0.0;
      for (std::size_t i = 0; i < all.size() && i < title.size(); ++i) best += all[i];
      double got = 0.0;
      for (const auto& t : title) {
        if (auto it = w.find(t); it != w.end()) got += it->second;
      }
      score = best > 0 ? std::min(1.0, got / best) : 0.0;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", score);
    return std::string("{\"score\": ") + buf + ", \"rationale\": \"title overlap with the user's history\"}";
  }

  // Items are weighted by their fit with the user summary (whose tokens are
  // listed most important first) times, when present, a power of their
  // alignment score. The best few items supply the attributes.
  std::string context(const heuristic::ParsedPrompt& p) const {
    using namespace heuristic;
    Weights prior;
    for (std::size_t i = 0; i < p.user_summary.size(); ++i) {
      prior.emplace(p.user_summary[i], 1.0 / (1.0 + static_cast<double>(i)));
    }
    std::vector<std::pair<double, const PromptItem*>> ranked;
    for (const auto& c : p.candidates) {
      double fit = 0.0;
      for (const auto& t : c.title) {
        if (auto it = prior.find(t); it != prior.end()) fit += it->second;
      }
      const double salience = c.score ? std::pow(*c.score, opts_.score_power) : 1.0;
      ranked.emplace_back(salience * (fit + 0.01), &c);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    Weights w;
    for (std::size_t i = 0; i < ranked.size() && i < opts_.fit_items; ++i) {
      for (const auto& t : ranked[i].second->title) w[t] += ranked[i].first / (1.0 + static_cast<double>(i));
    }
    return "Relevant attributes: " + join(top_tokens(w, opts_.context_tokens)) + ".";
  }

  std::string rank(const heuristic::ParsedPrompt& p) const {
    using namespace heuristic;
    const std::set<std::string> user(p.user_summary.begin(), p.user_summary.end());
    const std::set<std::string> ctx(p.context_summary.begin(), p.context_summary.end());
    std::vector<double> scores;
    for (const auto& c : p.candidates) {
      scores.push_back(static_cast<double>(overlap(c.title, user)) +
                       opts_.context_weight * static_cast<double>(overlap(c.title, ctx)));
    }
    return ranking_reply(p.candidates, scores, "ranked by fit with the user and context summaries");
  }

  std::string baseline(const heuristic::ParsedPrompt& p) const {
    using namespace heuristic;
    const Weights w = history_weights(p, 1.0);
    std::vector<double> scores;
    for (const auto& c : p.candidates) {
      double s = 0.0;
      for (const auto& t : c.title) {
        if (auto it = w.find(t); it != w.end()) s += it->second;
      }
      scores.push_back(s);
    }
    return ranking_reply(p.candidates, scores, "ranked by overlap with the listed history");
  }

  HeuristicOptions opts_;
};

}  // namespace arag
