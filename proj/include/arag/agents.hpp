/**
 * @file agents.hpp
 * @brief The four LLM agents: user understanding, NLI alignment, context
 *        summary and item ranking. Each one renders its prompt, calls the
 *        backend, parses the reply and posts one message to the blackboard.
 */

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/blackboard.hpp"
#include "arag/corpus.hpp"
#include "arag/llm.hpp"
#include "arag/prompts.hpp"

namespace arag {

struct UserSummary {
  std::string text;
};

struct NliJudgement {
  std::string item_id;
  double score = 0.0;
  std::string rationale;

  bool operator==(const NliJudgement&) const = default;
};

struct ContextSummary {
  std::string text;
  std::vector<std::string> source_item_ids;
};

struct Ranking {
  std::vector<std::string> ids;
  std::string explanation;
};

inline constexpr std::string_view kParseFailure = "parse_failure";

/// Knobs shared by all agents.
struct AgentOptions {
  std::size_t max_history_items = 10;   ///< per prompt, newest first
  std::size_t max_reviews = 3;
  std::size_t history_chars = 200;      ///< metadata budget per history line
  int max_tokens_uua = 256;
  int max_tokens_nli = 128;
  int max_tokens_csa = 512;
  int max_tokens_ira = 512;
  double temperature = 0.0;
  std::string model_tag;
};

// ---------------------------------------------------------------------------
// Rendering helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string truncate_utf8(std::string s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return s;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  s.resize(cut);
  return s + "...";
}

/// Joins the non-empty lines of `text` with " | ".
inline std::string one_line(std::string_view text) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      if (!out.empty()) out += " | ";
      out += line;
    }
    pos = end + 1;
  }
  return out;
}

inline std::string format_score(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", score);
  return buf;
}

inline std::string format_rating(double rating) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", rating);
  return buf;
}

}  // namespace detail

/// "- [id: X] Title: ... | Description: ... (rated 4/5)"
inline std::string render_history_line(const Interaction& x, const Catalog& catalog, const AgentOptions& opts) {
  const Item& item = catalog.at(x.item_id);
  std::string line = "- [id: " + item.id + "] " +
                     detail::truncate_utf8(detail::one_line(metadata_text(item, opts.max_reviews)), opts.history_chars);
  if (x.rating) line += " (rated " + detail::format_rating(*x.rating) + "/5)";
  return line;
}

/// Renders interactions newest first, capped at `cap` lines; "(none)" when empty.
inline std::string render_history(const std::vector<const Interaction*>& newest_first, const Catalog& catalog,
                                  const AgentOptions& opts, std::size_t cap) {
  std::string out;
  std::size_t n = 0;
  for (const Interaction* x : newest_first) {
    if (n == cap) break;
    if (!out.empty()) out += '\n';
    out += render_history_line(*x, catalog, opts);
    ++n;
  }
  return out.empty() ? "(none)" : out;
}

struct HistoryBlocks {
  std::string long_term;
  std::string session;
};

/// Splits the max_history_items budget newest-first across session then
/// long-term history.
inline HistoryBlocks render_context(const UserContext& ctx, const Catalog& catalog, const AgentOptions& opts) {
  std::vector<const Interaction*> session;
  std::vector<const Interaction*> long_term;
  for (auto it = ctx.session.rbegin(); it != ctx.session.rend(); ++it) session.push_back(&*it);
  for (auto it = ctx.long_term.rbegin(); it != ctx.long_term.rend(); ++it) long_term.push_back(&*it);
  const std::size_t session_cap = std::min(session.size(), opts.max_history_items);
  const std::size_t long_cap = opts.max_history_items - session_cap;
  return {render_history(long_term, catalog, opts, long_cap), render_history(session, catalog, opts, session_cap)};
}

/// "[id: X]" header followed by the labelled metadata.
inline std::string render_item(const Item& item, const AgentOptions& opts, std::optional<double> score = std::nullopt) {
  std::string out = "[id: " + item.id + "]";
  if (score) out += " (alignment score: " + detail::format_score(*score) + ")";
  out += '\n';
  std::string meta = metadata_text(item, opts.max_reviews);
  while (!meta.empty() && meta.back() == '\n') meta.pop_back();
  return out + meta;
}

inline std::string render_items(const std::vector<const Item*>& items, const AgentOptions& opts) {
  std::string out;
  for (const Item* item : items) {
    if (!out.empty()) out += "\n\n";
    out += render_item(*item, opts);
  }
  return out.empty() ? "(none)" : out;
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

namespace detail {

/// Index one past the bracket closing the one at `open`, ignoring brackets
/// inside JSON strings; npos if unbalanced.
inline std::size_t match_bracket(std::string_view s, std::size_t open) {
  const char o = s[open];
  const char c = o == '[' ? ']' : '}';
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char ch = s[i];
    if (in_string) {
      if (ch == '\\') {
        ++i;
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
    } else if (ch == o) {
      ++depth;
    } else if (ch == c) {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

/// First balanced JSON value starting with `open` ('[' or '{') that parses
/// and satisfies `accept`.
template <typename Pred>
std::optional<nlohmann::json> find_json(std::string_view raw, char open, Pred&& accept) {
  for (std::size_t pos = raw.find(open); pos != std::string_view::npos; pos = raw.find(open, pos + 1)) {
    const std::size_t end = match_bracket(raw, pos);
    if (end == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(raw.substr(pos, end - pos), nullptr, false);
    if (!parsed.is_discarded() && accept(parsed)) return parsed;
  }
  return std::nullopt;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_string_array(const nlohmann::json& j) {
  return j.is_array() && std::all_of(j.begin(), j.end(), [](const nlohmann::json& e) { return e.is_string(); });
}

}  // namespace detail

/// Parses {"score": x, "rationale": "..."} out of a reply. The score is
/// clamped to [0, 1]; returns nullopt when no usable object is found.
inline std::optional<NliJudgement> parse_nli_reply(std::string_view raw, const std::string& item_id) {
  auto obj = detail::find_json(raw, '{', [](const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("score")) return false;
    const auto& s = j["score"];
    if (s.is_number()) return std::isfinite(s.get<double>());
    return false;
  });
  if (!obj) return std::nullopt;
  NliJudgement out;
  out.item_id = item_id;
  out.score = std::clamp((*obj)["score"].get<double>(), 0.0, 1.0);
  if (obj->contains("rationale") && (*obj)["rationale"].is_string()) out.rationale = (*obj)["rationale"].get<std::string>();
  return out;
}

/// Repairs an LLM ranking into a permutation of candidate_ids.
///
/// Takes the first JSON array of strings in `raw`; keeps entries that match a
/// candidate exactly or, failing that, case-insensitively when the match is
/// unique; drops duplicates and foreign ids; appends every missing candidate
/// in retrieval order.
inline std::vector<std::string> parse_ranking(std::string_view raw, const std::vector<std::string>& candidate_ids,
                                              const std::vector<std::string>& retrieval_order) {
  std::unordered_set<std::string> exact(candidate_ids.begin(), candidate_ids.end());
  std::unordered_map<std::string, std::string> folded;
  std::unordered_set<std::string> ambiguous;
  for (const auto& id : candidate_ids) {
    auto key = detail::lower(id);
    if (!folded.emplace(key, id).second) ambiguous.insert(key);
  }

  std::vector<std::string> out;
  std::unordered_set<std::string> used;
  if (auto arr = detail::find_json(raw, '[', detail::is_string_array)) {
    for (const auto& e : *arr) {
      std::string id = e.get<std::string>();
      if (exact.count(id) == 0) {
        const auto key = detail::lower(id);
        auto it = folded.find(key);
        if (it == folded.end() || ambiguous.count(key) != 0) continue;
        id = it->second;
      }
      if (used.insert(id).second) out.push_back(std::move(id));
    }
  }
  for (const auto& id : retrieval_order) {
    if (exact.count(id) != 0 && used.insert(id).second) out.push_back(id);
  }
  // retrieval_order is expected to cover the candidates; guard anyway.
  for (const auto& id : candidate_ids) {
    if (used.insert(id).second) out.push_back(id);
  }
  return out;
}

/// The "explanation" string of a ranking reply, or the raw text.
inline std::string extract_explanation(std::string_view raw) {
  auto obj = detail::find_json(raw, '{', [](const nlohmann::json& j) {
    return j.is_object() && j.contains("explanation") && j["explanation"].is_string();
  });
  return obj ? (*obj)["explanation"].get<std::string>() : std::string(raw);
}

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

inline constexpr std::string_view kUserMessageId = "uua";
inline constexpr std::string_view kContextMessageId = "csa";
inline constexpr std::string_view kRankerMessageId = "ira";

inline std::string nli_message_id(std::string_view item_id) { return "nli:" + std::string(item_id); }

namespace detail {

inline ChatRequest make_request(std::vector<ChatMessage> messages, AgentRole role, int max_tokens,
                                const AgentOptions& opts) {
  ChatRequest req;
  req.messages = std::move(messages);
  req.temperature = opts.temperature;
  req.max_tokens = max_tokens;
  req.model_tag = opts.model_tag;
  req.agent = std::string(to_string(role));
  return req;
}

inline std::string non_empty(std::string text, std::string_view fallback) {
  const bool blank = std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; });
  return blank ? std::string(fallback) : text;
}

}  // namespace detail

inline ChatRequest uua_request(const UserContext& ctx, const Catalog& catalog, const PromptSet& prompts,
                               const AgentOptions& opts) {
  const auto blocks = render_context(ctx, catalog, opts);
  return detail::make_request(
      prompts.get("uua").render({{"long_term", blocks.long_term}, {"session", blocks.session}}),
      AgentRole::user_understanding, opts.max_tokens_uua, opts);
}

/// S_user = Omega(u). Posts the user_understanding message at stage 1.
inline UserSummary run_uua(const UserContext& ctx, const Catalog& catalog, ChatBackend& backend, Blackboard& board,
                           const PromptSet& prompts, const AgentOptions& opts) {
  const auto reply = backend.complete(uua_request(ctx, catalog, prompts, opts));
  UserSummary summary{detail::non_empty(reply.text, "(no summary produced)")};
  board.post({std::string(kUserMessageId), AgentRole::user_understanding, summary.text, std::nullopt, 0,
              protocol_stage(AgentRole::user_understanding)});
  return summary;
}

inline ChatRequest nli_request(const Item& item, const UserContext& ctx, const Catalog& catalog,
                               const PromptSet& prompts, const AgentOptions& opts) {
  const auto blocks = render_context(ctx, catalog, opts);
  return detail::make_request(prompts.get("nli").render({{"long_term", blocks.long_term},
                                                         {"session", blocks.session},
                                                         {"item", render_item(item, opts)}}),
                              AgentRole::nli, opts.max_tokens_nli, opts);
}

/// s_NLI(i, u) = Phi(T(i), u). One re-prompt on an unparseable reply; after
/// that the judgement is recorded as score 0 with rationale "parse_failure".
inline NliJudgement run_nli(const Item& item, const UserContext& ctx, const Catalog& catalog, ChatBackend& backend,
                            Blackboard& board, const PromptSet& prompts, const AgentOptions& opts) {
  ChatRequest req = nli_request(item, ctx, catalog, prompts, opts);
  auto judgement = parse_nli_reply(backend.complete(req).text, item.id);
  if (!judgement) {
    for (auto& m : prompts.get("nli_retry").render({})) req.messages.push_back(std::move(m));
    judgement = parse_nli_reply(backend.complete(req).text, item.id);
  }
  if (!judgement) judgement = NliJudgement{item.id, 0.0, std::string(kParseFailure)};

  const nlohmann::json content = {{"item_id", judgement->item_id}, {"rationale", judgement->rationale}};
  board.post({nli_message_id(item.id), AgentRole::nli, detail::dump(content), judgement->score, 0,
              protocol_stage(AgentRole::nli)});
  return *judgement;
}

/// I+ : items with score >= theta, ordered by (score desc, id asc). When fewer
/// than m_min qualify, the top m_min judgements are returned instead.
inline std::vector<std::string> filter_aligned(const std::vector<NliJudgement>& judgements, double theta,
                                               std::size_t m_min) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw UsageError("filter_aligned: theta must lie in [0, 1]");
  std::vector<const NliJudgement*> sorted;
  sorted.reserve(judgements.size());
  for (const auto& j : judgements) sorted.push_back(&j);
  std::sort(sorted.begin(), sorted.end(), [](const NliJudgement* a, const NliJudgement* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->item_id < b->item_id;
  });
  std::vector<std::string> accepted;
  for (const auto* j : sorted) {
    if (j->score >= theta) accepted.push_back(j->item_id);
  }
  if (accepted.size() < m_min) {
    accepted.clear();
    for (std::size_t i = 0; i < sorted.size() && i < m_min; ++i) accepted.push_back(sorted[i]->item_id);
  }
  return accepted;
}

/// Judgements recovered from the nli messages on the board, in canonical order.
inline std::vector<NliJudgement> judgements_from_board(const Blackboard& board) {
  std::vector<NliJudgement> out;
  for (const auto& m : board.read(AgentRole::nli)) {
    const auto content = nlohmann::json::parse(m.content, nullptr, false);
    if (content.is_discarded() || !content.contains("item_id")) {
      throw DataError("nli message " + m.id + " has malformed content");
    }
    out.push_back({content["item_id"].get<std::string>(), m.score.value_or(0.0),
                   content.value("rationale", std::string{})});
  }
  return out;
}

/// Accepted items in prompt order. With judgements: (score desc, id asc),
/// each annotated with its score. Without: the given order, unannotated.
inline ChatRequest csa_request(const std::vector<const Item*>& accepted, const UserSummary& user_summary,
                               const std::vector<NliJudgement>& judgements, const PromptSet& prompts,
                               const AgentOptions& opts) {
  std::string items;
  if (judgements.empty()) {
    items = render_items(accepted, opts);
  } else {
    std::unordered_map<std::string, double> scores;
    for (const auto& j : judgements) scores[j.item_id] = j.score;
    auto ordered = accepted;
    std::stable_sort(ordered.begin(), ordered.end(), [&](const Item* a, const Item* b) {
      const double sa = scores.count(a->id) ? scores[a->id] : 0.0;
      const double sb = scores.count(b->id) ? scores[b->id] : 0.0;
      if (sa != sb) return sa > sb;
      return a->id < b->id;
    });
    for (const Item* item : ordered) {
      if (!items.empty()) items += "\n\n";
      const auto it = scores.find(item->id);
      items += render_item(*item, opts, it == scores.end() ? 0.0 : it->second);
    }
    if (items.empty()) items = "(none)";
  }
  const char* name = judgements.empty() ? "csa_unscored" : "csa";
  return detail::make_request(prompts.get(name).render({{"user_summary", user_summary.text}, {"items", items}}),
                              AgentRole::context_summary, opts.max_tokens_csa, opts);
}

/// S_ctx = Psi{T(i) | i in I+}. Pass empty judgements to summarize without
/// score annotations. Posts the context_summary message at stage 2.
inline ContextSummary run_csa(const std::vector<const Item*>& accepted, const UserSummary& user_summary,
                              const std::vector<NliJudgement>& judgements, ChatBackend& backend, Blackboard& board,
                              const PromptSet& prompts, const AgentOptions& opts) {
  if (accepted.empty()) throw UsageError("run_csa: the accepted set is empty");
  const auto reply = backend.complete(csa_request(accepted, user_summary, judgements, prompts, opts));
  ContextSummary out;
  out.text = detail::non_empty(reply.text, "(no summary produced)");
  for (const Item* item : accepted) out.source_item_ids.push_back(item->id);
  const nlohmann::json content = {{"summary", out.text}, {"source_item_ids", out.source_item_ids}};
  board.post({std::string(kContextMessageId), AgentRole::context_summary, detail::dump(content), std::nullopt, 0,
              protocol_stage(AgentRole::context_summary)});
  return out;
}

inline std::vector<std::string> ids_of(const std::vector<const Item*>& items) {
  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const Item* item : items) ids.push_back(item->id);
  return ids;
}

/// Sends a ranking prompt, repairs the reply into a permutation and posts the
/// item_ranker message at stage 3. The message content carries everything
/// needed to re-run the parse from the trace alone.
inline Ranking rank_and_post(ChatRequest request, const std::vector<const Item*>& candidates,
                             const std::vector<std::string>& retrieval_order, ChatBackend& backend,
                             Blackboard& board) {
  const auto reply = backend.complete(request);
  const auto candidate_ids = ids_of(candidates);
  Ranking out;
  out.ids = parse_ranking(reply.text, candidate_ids, retrieval_order);
  out.explanation = extract_explanation(reply.text);
  const nlohmann::json content = {{"candidates", candidate_ids},
                                  {"retrieval_order", retrieval_order},
                                  {"raw", reply.text},
                                  {"ranking", out.ids},
                                  {"explanation", out.explanation}};
  board.post({std::string(kRankerMessageId), AgentRole::item_ranker, detail::dump(content), std::nullopt, 0,
              protocol_stage(AgentRole::item_ranker)});
  return out;
}

inline ChatRequest ira_request(const UserSummary& user_summary, const std::optional<ContextSummary>& context_summary,
                               const std::vector<const Item*>& candidates, const PromptSet& prompts,
                               const AgentOptions& opts) {
  return detail::make_request(
      prompts.get("ira").render({{"user_summary", user_summary.text},
                                 {"context_summary", context_summary ? context_summary->text : std::string("(none)")},
                                 {"candidates", render_items(candidates, opts)}}),
      AgentRole::item_ranker, opts.max_tokens_ira, opts);
}

/// pi = f_rank(S_user, S_ctx, I). The result is always a permutation of the
/// candidates. Posts the item_ranker message at stage 3.
inline Ranking run_ira(const UserSummary& user_summary, const std::optional<ContextSummary>& context_summary,
                       const std::vector<const Item*>& candidates, const std::vector<std::string>& retrieval_order,
                       ChatBackend& backend, Blackboard& board, const PromptSet& prompts, const AgentOptions& opts) {
  if (candidates.empty()) throw UsageError("run_ira: no candidates");
  return rank_and_post(ira_request(user_summary, context_summary, candidates, prompts, opts), candidates,
                       retrieval_order, backend, board);
}

/// Re-runs the ranking parse recorded in an item_ranker message.
inline std::vector<std::string> reparse_ranker_message(const Message& m) {
  const auto content = nlohmann::json::parse(m.content, nullptr, false);
  if (content.is_discarded() || !content.is_object() || !content.contains("raw") || !content.contains("candidates") ||
      !content.contains("retrieval_order")) {
    throw DataError("item_ranker message " + m.id + " lacks raw/candidates/retrieval_order");
  }
  return parse_ranking(content["raw"].get<std::string>(), content["candidates"].get<std::vector<std::string>>(),
                       content["retrieval_order"].get<std::vector<std::string>>());
}

}  // namespace arag
