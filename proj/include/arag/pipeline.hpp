/**
 * @file pipeline.hpp
 * @brief The three-step agent protocol, its two ablations, and the recency
 *        and vanilla-RAG baselines.
 *
 * Step 1 runs the user-understanding agent and one NLI call per candidate
 * concurrently; step 2 filters by NLI score and summarizes the accepted items;
 * step 3 ranks the full candidate pool. Steps are barriers and each one reads
 * its inputs from the canonical blackboard view.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "arag/agents.hpp"
#include "arag/blackboard.hpp"
#include "arag/corpus.hpp"
#include "arag/embed.hpp"
#include "arag/llm.hpp"
#include "arag/prompts.hpp"

namespace arag {

enum class Variant { recency, vanilla_rag, arag_no_nli_no_csa, arag_no_nli, arag };

inline constexpr Variant kAllVariants[] = {Variant::recency, Variant::vanilla_rag, Variant::arag_no_nli_no_csa,
                                           Variant::arag_no_nli, Variant::arag};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::recency: return "recency";
    case Variant::vanilla_rag: return "vanilla_rag";
    case Variant::arag_no_nli_no_csa: return "arag_no_nli_no_csa";
    case Variant::arag_no_nli: return "arag_no_nli";
    case Variant::arag: return "arag";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  throw UsageError("unknown variant \"" + std::string(s) +
                   "\" (expected recency, vanilla_rag, arag_no_nli_no_csa, arag_no_nli or arag)");
}

struct PipelineConfig {
  std::size_t k = 50;                     ///< recall depth
  double theta = 0.5;                     ///< NLI acceptance threshold
  std::size_t m_min = 3;                  ///< minimum accepted items (fallback)
  std::size_t candidate_pool_size = 20;
  Variant variant = Variant::arag;
  std::uint64_t seed = 0;
  std::size_t concurrency_cap = 4;        ///< simultaneous step-1 calls
  AgentOptions agent;

  void validate() const {
    if (k < 1) throw UsageError("k must be >= 1");
    if (candidate_pool_size < 1) throw UsageError("candidate_pool_size must be >= 1");
    if (!(theta >= 0.0 && theta <= 1.0)) throw UsageError("theta must lie in [0, 1]");
    if (concurrency_cap < 1) throw UsageError("concurrency_cap must be >= 1");
    if (agent.max_history_items < 1) throw UsageError("max_history_items must be >= 1");
  }
};

struct CallUsage {
  std::string agent;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct PipelineOutput {
  Ranking ranking;
  Blackboard board;
  std::string trace;  ///< serialized board
  std::vector<std::string> retrieval_order;
  std::vector<CallUsage> usage;
  double wall_ms = 0.0;
};

/// Runs a batch of independent tasks and returns once all have finished.
using TaskRunner = std::function<void(std::vector<std::function<void()>>&)>;

/// Runs tasks on up to `cap` worker threads. Exceptions are collected and the
/// first one in task order is rethrown after every task has finished.
inline void run_bounded(std::vector<std::function<void()>>& tasks, std::size_t cap) {
  std::vector<std::exception_ptr> errors(tasks.size());
  auto run_one = [&](std::size_t i) {
    try {
      tasks[i]();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(cap, tasks.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Decorator that records per-call token usage.
class UsageMeter final : public ChatBackend {
 public:
  explicit UsageMeter(ChatBackend& inner) : inner_(inner) {}

  ChatResponse complete(const ChatRequest& request) override {
    auto r = inner_.complete(request);
    std::lock_guard lock(mutex_);
    calls_.push_back({request.agent, r.prompt_tokens, r.completion_tokens});
    return r;
  }

  std::string kind() const override { return inner_.kind(); }

  std::vector<CallUsage> calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

 private:
  ChatBackend& inner_;
  mutable std::mutex mutex_;
  std::vector<CallUsage> calls_;
};

/// Everything a pipeline run needs besides the user and the pool.
struct Runtime {
  const Catalog& catalog;
  const Embedder& embedder;
  const PromptSet& prompts;
  ChatBackend& backend;
  /// Optional precomputed item vectors; items missing here are embedded on demand.
  const VectorIndex* index = nullptr;
  /// Step-1 executor; defaults to run_bounded with the configured cap.
  TaskRunner runner;
  /// Blackboard clock; defaults to wall-clock milliseconds.
  Blackboard::Clock clock;
};

namespace detail {

inline EmbeddingVector item_vector(const Runtime& rt, const Item& item, std::size_t max_reviews) {
  if (rt.index != nullptr) {
    if (const auto* v = rt.index->find(item.id)) return *v;
  }
  return rt.embedder.embed(metadata_text(item, max_reviews));
}

/// Pool ids by cosine to the user embedding (ties by id): the prior used to
/// complete partial rankings.
inline std::vector<std::string> retrieval_order(const Runtime& rt, const UserContext& ctx,
                                                const std::vector<const Item*>& pool, const PipelineConfig& cfg) {
  const auto user = embed_user(ctx, rt.catalog, rt.embedder, cfg.agent.max_history_items, cfg.agent.max_reviews);
  std::vector<ScoredItem> scored;
  scored.reserve(pool.size());
  for (const Item* item : pool) scored.push_back({item->id, cosine(item_vector(rt, *item, cfg.agent.max_reviews), user)});
  std::sort(scored.begin(), scored.end(), ranks_before);
  std::vector<std::string> ids;
  ids.reserve(scored.size());
  for (auto& s : scored) ids.push_back(std::move(s.id));
  return ids;
}

inline std::vector<const Item*> check_pool(const std::vector<Item>& pool) {
  if (pool.empty()) throw UsageError("candidate pool is empty");
  std::vector<const Item*> out;
  std::unordered_set<std::string> seen;
  for (const auto& item : pool) {
    if (!seen.insert(item.id).second) throw DataError("candidate pool repeats item \"" + item.id + "\"");
    out.push_back(&item);
  }
  return out;
}

inline void check_context(const UserContext& ctx) {
  if (ctx.empty()) throw DataError("user \"" + ctx.user_id + "\" has no interactions");
}

inline Blackboard make_board(const Runtime& rt) {
  return rt.clock ? Blackboard(rt.clock) : Blackboard();
}

inline PipelineOutput finish(Ranking ranking, Blackboard board, std::vector<std::string> order,
                             const UsageMeter& meter, std::chrono::steady_clock::time_point start) {
  PipelineOutput out{std::move(ranking), std::move(board), {}, std::move(order), meter.calls(), 0.0};
  out.trace = serialize(out.board);
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline UserSummary user_summary_from_board(const Blackboard& board) {
  const auto msgs = board.read(AgentRole::user_understanding);
  if (msgs.size() != 1) throw DataError("expected exactly one user_understanding message on the board");
  return {msgs.front().content};
}

}  // namespace detail

/// Full protocol. `with_nli` / `with_csa` switch off agents for the ablations.
inline PipelineOutput run_agentic(const UserContext& ctx, const std::vector<Item>& pool_items,
                                  const PipelineConfig& cfg, const Runtime& rt, bool with_nli, bool with_csa) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  detail::check_context(ctx);
  const auto pool = detail::check_pool(pool_items);
  const auto order = detail::retrieval_order(rt, ctx, pool, cfg);
  UsageMeter meter(rt.backend);
  Blackboard board = detail::make_board(rt);
  const AgentOptions& opts = cfg.agent;

  // Step 1: parallel inference.
  std::vector<std::function<void()>> tasks;
  tasks.emplace_back([&] { run_uua(ctx, rt.catalog, meter, board, rt.prompts, opts); });
  if (with_nli) {
    for (const Item* item : pool) {
      tasks.emplace_back([&, item] { run_nli(*item, ctx, rt.catalog, meter, board, rt.prompts, opts); });
    }
  }
  if (rt.runner) {
    rt.runner(tasks);
  } else {
    run_bounded(tasks, cfg.concurrency_cap);
  }

  // Step 2: cross-agent attention over the canonical stage-1 view.
  const UserSummary user_summary = detail::user_summary_from_board(board);
  std::optional<ContextSummary> context_summary;
  if (with_csa) {
    std::unordered_map<std::string, const Item*> by_id;
    for (const Item* item : pool) by_id.emplace(item->id, item);
    if (with_nli) {
      const auto judgements = judgements_from_board(board);
      std::vector<const Item*> accepted;
      for (const auto& id : filter_aligned(judgements, cfg.theta, std::max<std::size_t>(cfg.m_min, 1))) {
        accepted.push_back(by_id.at(id));
      }
      context_summary = run_csa(accepted, user_summary, judgements, meter, board, rt.prompts, opts);
    } else {
      std::vector<const Item*> by_retrieval;
      for (const auto& id : order) by_retrieval.push_back(by_id.at(id));
      context_summary = run_csa(by_retrieval, user_summary, {}, meter, board, rt.prompts, opts);
    }
  }

  // Step 3: final ranking of the whole pool.
  auto ranking = run_ira(user_summary, context_summary, pool, order, meter, board, rt.prompts, opts);
  return detail::finish(std::move(ranking), std::move(board), order, meter, start);
}

inline PipelineOutput run_arag(const UserContext& ctx, const std::vector<Item>& pool, const PipelineConfig& cfg,
                               const Runtime& rt) {
  return run_agentic(ctx, pool, cfg, rt, true, true);
}

/// History items ordered by cosine similarity to the candidate pool (ties:
/// newer first), capped at max_history_items.
inline std::vector<const Interaction*> similar_history(const UserContext& ctx, const std::vector<const Item*>& pool,
                                                       const PipelineConfig& cfg, const Runtime& rt) {
  std::string pool_text;
  for (const Item* item : pool) pool_text += metadata_text(*item, cfg.agent.max_reviews);
  const auto query = rt.embedder.embed(pool_text);
  struct Scored {
    const Interaction* x;
    double score;
    std::size_t recency;  // 0 = newest
  };
  std::vector<Scored> scored;
  std::size_t rank = 0;
  for (const Interaction* x : ctx.newest_first()) {
    scored.push_back({x, cosine(detail::item_vector(rt, rt.catalog.at(x->item_id), cfg.agent.max_reviews), query),
                      rank++});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.recency < b.recency;
  });
  std::vector<const Interaction*> out;
  for (std::size_t i = 0; i < scored.size() && i < cfg.agent.max_history_items; ++i) out.push_back(scored[i].x);
  return out;
}

inline ChatRequest baseline_request(const std::vector<const Interaction*>& history,
                                    const std::vector<const Item*>& pool, const PipelineConfig& cfg,
                                    const Runtime& rt) {
  return detail::make_request(
      rt.prompts.get("baseline").render(
          {{"history", render_history(history, rt.catalog, cfg.agent, cfg.agent.max_history_items)},
           {"candidates", render_items(pool, cfg.agent)}}),
      AgentRole::item_ranker, cfg.agent.max_tokens_ira, cfg.agent);
}

namespace detail {

inline PipelineOutput run_baseline(const UserContext& ctx, const std::vector<Item>& pool_items,
                                   const PipelineConfig& cfg, const Runtime& rt, bool by_similarity) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  check_context(ctx);
  const auto pool = check_pool(pool_items);
  const auto order = retrieval_order(rt, ctx, pool, cfg);
  UsageMeter meter(rt.backend);
  Blackboard board = make_board(rt);
  std::vector<const Interaction*> history = by_similarity ? similar_history(ctx, pool, cfg, rt) : ctx.newest_first();
  if (history.size() > cfg.agent.max_history_items) history.resize(cfg.agent.max_history_items);
  auto ranking = rank_and_post(baseline_request(history, pool, cfg, rt), pool, order, meter, board);
  return finish(std::move(ranking), std::move(board), order, meter, start);
}

}  // namespace detail

/// Single LLM call with history items chosen by embedding similarity to the pool.
inline PipelineOutput run_vanilla_rag(const UserContext& ctx, const std::vector<Item>& pool,
                                      const PipelineConfig& cfg, const Runtime& rt) {
  return detail::run_baseline(ctx, pool, cfg, rt, true);
}

/// Single LLM call with the most recent history items, unfiltered.
inline PipelineOutput run_recency(const UserContext& ctx, const std::vector<Item>& pool, const PipelineConfig& cfg,
                                  const Runtime& rt) {
  return detail::run_baseline(ctx, pool, cfg, rt, false);
}

inline PipelineOutput run_variant(const UserContext& ctx, const std::vector<Item>& pool, const PipelineConfig& cfg,
                                  const Runtime& rt) {
  switch (cfg.variant) {
    case Variant::arag: return run_arag(ctx, pool, cfg, rt);
    case Variant::arag_no_nli: return run_agentic(ctx, pool, cfg, rt, false, true);
    case Variant::arag_no_nli_no_csa: return run_agentic(ctx, pool, cfg, rt, false, false);
    case Variant::vanilla_rag: return run_vanilla_rag(ctx, pool, cfg, rt);
    case Variant::recency: return run_recency(ctx, pool, cfg, rt);
  }
  throw UsageError("unknown variant");
}

/// Final ranking recovered from a trace by re-running the stage-3 parse.
inline std::vector<std::string> ranking_from_trace(std::string_view trace) {
  const Blackboard board = replay(trace);
  const auto ranker = board.read(AgentRole::item_ranker);
  if (ranker.size() != 1) throw DataError("trace must contain exactly one item_ranker message");
  return reparse_ranker_message(ranker.front());
}

}  // namespace arag
