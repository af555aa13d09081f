/**
 * @file eval.hpp
 * @brief NDCG@k / Hit@k, closed-pool candidate construction and the
 *        experiment runner.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/corpus.hpp"
#include "arag/embed.hpp"
#include "arag/hash.hpp"
#include "arag/pipeline.hpp"
#include "arag/report.hpp"

namespace arag {

/// 1-based position of ground_truth in ranking, or nullopt when absent.
inline std::optional<std::size_t> rank_of(const std::vector<std::string>& ranking, std::string_view ground_truth) {
  auto it = std::find(ranking.begin(), ranking.end(), ground_truth);
  if (it == ranking.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ranking.begin()) + 1;
}

/// Binary single-relevant NDCG: 1 / log2(rank + 1) when rank <= k, else 0 (IDCG = 1).
inline double ndcg_at_k(const std::vector<std::string>& ranking, std::string_view ground_truth, std::size_t k) {
  if (k == 0) throw UsageError("ndcg_at_k: k must be >= 1");
  const auto rank = rank_of(ranking, ground_truth);
  if (!rank || *rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

inline int hit_at_k(const std::vector<std::string>& ranking, std::string_view ground_truth, std::size_t k) {
  if (k == 0) throw UsageError("hit_at_k: k must be >= 1");
  const auto rank = rank_of(ranking, ground_truth);
  return rank && *rank <= k ? 1 : 0;
}

enum class PoolMode { closed, open };

/// Closed pool: the ground truth plus pool_size - 1 negatives, shuffled.
///
/// Negatives are the top-k catalog items by cosine to the user embedding,
/// skipping the ground truth and everything in the user's history; if that
/// yields too few, the rest is drawn uniformly (seeded) from the remaining
/// catalog. The result is shuffled with the same seed.
inline std::vector<Item> build_candidate_pool(const EvalInstance& instance, const Catalog& catalog,
                                              const VectorIndex& index, const Embedder& embedder,
                                              std::size_t pool_size, std::uint64_t seed, std::size_t k = 50,
                                              const AgentOptions& opts = {}) {
  if (pool_size < 2) throw UsageError("pool_size must be >= 2");
  if (catalog.size() < pool_size) {
    throw DataError("catalog has " + std::to_string(catalog.size()) + " items, fewer than pool_size " +
                    std::to_string(pool_size));
  }
  const Item& truth = catalog.at(instance.ground_truth);
  std::unordered_set<std::string> excluded{truth.id};
  for (const auto& x : instance.context.long_term) excluded.insert(x.item_id);
  for (const auto& x : instance.context.session) excluded.insert(x.item_id);
  const std::size_t needed = pool_size - 1;
  if (catalog.size() < excluded.size() + needed) {
    throw DataError("catalog too small to draw " + std::to_string(needed) + " negatives for user \"" +
                    instance.context.user_id + "\"");
  }

  std::vector<Item> pool{truth};
  std::unordered_set<std::string> chosen;
  if (!instance.context.empty()) {
    const auto user = embed_user(instance.context, catalog, embedder, opts.max_history_items, opts.max_reviews);
    for (const auto& hit : retrieve_topk(index, user, std::max(k, std::size_t{1}))) {
      if (chosen.size() == needed) break;
      if (excluded.count(hit.id) != 0 || !catalog.contains(hit.id)) continue;
      chosen.insert(hit.id);
      pool.push_back(catalog.at(hit.id));
    }
  }

  SeededRng rng(derive_seed(seed, instance.context.user_id));
  if (chosen.size() < needed) {
    std::vector<const Item*> rest;
    for (const auto& item : catalog) {
      if (excluded.count(item.id) == 0 && chosen.count(item.id) == 0) rest.push_back(&item);
    }
    while (chosen.size() < needed) {
      const std::size_t j = rng.below(rest.size());
      chosen.insert(rest[j]->id);
      pool.push_back(*rest[j]);
      rest[j] = rest.back();
      rest.pop_back();
    }
  }
  rng.shuffle(pool);
  return pool;
}

/// Open catalog: the top-k recall set (history excluded) is the pool; the
/// ground truth is rankable only if retrieval finds it.
inline std::vector<Item> build_recall_pool(const EvalInstance& instance, const Catalog& catalog,
                                           const VectorIndex& index, const Embedder& embedder, std::size_t k,
                                           const AgentOptions& opts = {}) {
  std::unordered_set<std::string> history;
  for (const auto& x : instance.context.long_term) history.insert(x.item_id);
  for (const auto& x : instance.context.session) history.insert(x.item_id);
  const auto user = embed_user(instance.context, catalog, embedder, opts.max_history_items, opts.max_reviews);
  std::vector<Item> pool;
  for (const auto& hit : retrieve_topk(index, user, k + history.size())) {
    if (pool.size() == k) break;
    if (history.count(hit.id) == 0) pool.push_back(catalog.at(hit.id));
  }
  return pool;
}

inline std::string pool_digest(const std::vector<Item>& pool) {
  std::string ids;
  for (const auto& item : pool) ids += item.id + '\n';
  return sha256_hex(ids);
}

struct UserRecord {
  std::string user_id;
  Variant variant = Variant::arag;
  std::string ground_truth;
  std::optional<std::size_t> rank;
  double ndcg = 0.0;
  int hit = 0;
  bool failed = false;
  std::string error;
  std::string pool_digest;
  std::vector<std::string> ranking;
  std::string explanation;
  std::string trace;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct VariantAggregate {
  Variant variant = Variant::arag;
  double ndcg = 0.0;
  double hit = 0.0;
  std::size_t users = 0;
  std::size_t failures = 0;
};

struct EvalResult {
  std::size_t metric_k = 5;
  std::vector<UserRecord> records;  ///< ordered by (user_id, variant)
  std::vector<VariantAggregate> aggregates;
  std::size_t missing_ground_truth = 0;
  double failure_fraction = 0.0;
};

struct ExperimentConfig {
  PipelineConfig pipeline;
  std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  std::size_t metric_k = 5;
  PoolMode pool_mode = PoolMode::closed;
  double failure_limit = 0.0;
  std::string dataset_name = "dataset";
};

/// Means over successful users, one row per variant in `variants` order.
inline std::vector<VariantAggregate> aggregate(const std::vector<UserRecord>& records,
                                               const std::vector<Variant>& variants) {
  std::vector<VariantAggregate> out;
  for (Variant v : variants) {
    VariantAggregate a;
    a.variant = v;
    for (const auto& r : records) {
      if (r.variant != v) continue;
      if (r.failed) {
        ++a.failures;
        continue;
      }
      a.ndcg += r.ndcg;
      a.hit += r.hit;
      ++a.users;
    }
    if (a.users > 0) {
      a.ndcg /= static_cast<double>(a.users);
      a.hit /= static_cast<double>(a.users);
    }
    out.push_back(a);
  }
  return out;
}

/// For each instance, builds one pool shared by every variant, runs each
/// variant and scores it. A failing (user, variant) pair is recorded and
/// skipped, never fatal.
inline EvalResult run_experiment(const std::vector<EvalInstance>& instances, const ExperimentConfig& cfg,
                                 const Runtime& rt, const VectorIndex& index) {
  cfg.pipeline.validate();
  if (cfg.metric_k < 1) throw UsageError("metric k must be >= 1");
  EvalResult result;
  result.metric_k = cfg.metric_k;

  std::vector<const EvalInstance*> ordered;
  for (const auto& inst : instances) ordered.push_back(&inst);
  std::stable_sort(ordered.begin(), ordered.end(), [](const EvalInstance* a, const EvalInstance* b) {
    return a->context.user_id < b->context.user_id;
  });

  for (const EvalInstance* inst : ordered) {
    std::vector<Item> pool;
    std::string pool_error;
    try {
      pool = cfg.pool_mode == PoolMode::closed
                 ? build_candidate_pool(*inst, rt.catalog, index, rt.embedder, cfg.pipeline.candidate_pool_size,
                                        cfg.pipeline.seed, cfg.pipeline.k, cfg.pipeline.agent)
                 : build_recall_pool(*inst, rt.catalog, index, rt.embedder, cfg.pipeline.k, cfg.pipeline.agent);
    } catch (const Error& e) {
      pool_error = e.what();
    }
    const std::string digest = pool_error.empty() ? pool_digest(pool) : std::string{};

    for (Variant v : cfg.variants) {
      UserRecord rec;
      rec.user_id = inst->context.user_id;
      rec.variant = v;
      rec.ground_truth = inst->ground_truth;
      rec.pool_digest = digest;
      if (!pool_error.empty()) {
        rec.failed = true;
        rec.error = pool_error;
        result.records.push_back(std::move(rec));
        continue;
      }
      PipelineConfig pc = cfg.pipeline;
      pc.variant = v;
      try {
        auto out = run_variant(inst->context, pool, pc, rt);
        rec.ranking = out.ranking.ids;
        rec.explanation = out.ranking.explanation;
        rec.trace = out.trace;
        for (const auto& u : out.usage) {
          rec.prompt_tokens += u.prompt_tokens;
          rec.completion_tokens += u.completion_tokens;
        }
        rec.rank = rank_of(rec.ranking, rec.ground_truth);
        if (!rec.rank) ++result.missing_ground_truth;
        rec.ndcg = ndcg_at_k(rec.ranking, rec.ground_truth, cfg.metric_k);
        rec.hit = hit_at_k(rec.ranking, rec.ground_truth, cfg.metric_k);
      } catch (const Error& e) {
        rec.failed = true;
        rec.error = e.what();
      }
      result.records.push_back(std::move(rec));
    }
  }

  result.aggregates = aggregate(result.records, cfg.variants);
  std::size_t failed = 0;
  for (const auto& r : result.records) failed += r.failed ? 1 : 0;
  result.failure_fraction =
      result.records.empty() ? 0.0 : static_cast<double>(failed) / static_cast<double>(result.records.size());
  return result;
}

inline bool failure_limit_exceeded(const EvalResult& result, double limit) {
  return result.failure_fraction > limit;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline std::string metric_key(std::string_view metric, std::size_t k) {
  return std::string(metric) + "@" + std::to_string(k);
}

inline nlohmann::json record_json(const UserRecord& r, std::size_t k) {
  nlohmann::json j;
  j["user_id"] = r.user_id;
  j["variant"] = std::string(to_string(r.variant));
  j["ground_truth"] = r.ground_truth;
  j["rank"] = r.rank ? nlohmann::json(*r.rank) : nlohmann::json(nullptr);
  j[metric_key("ndcg", k)] = r.ndcg;
  j[metric_key("hit", k)] = r.hit;
  j["failed"] = r.failed;
  if (r.failed) j["error"] = r.error;
  j["pool_digest"] = r.pool_digest;
  j["ranking"] = r.ranking;
  return j;
}

inline nlohmann::json aggregate_json(const VariantAggregate& a, std::size_t k) {
  return {{"variant", std::string(to_string(a.variant))},
          {metric_key("ndcg", k), a.ndcg},
          {metric_key("hit", k), a.hit},
          {"users", a.users},
          {"failures", a.failures}};
}

inline std::optional<VariantAggregate> find_aggregate(const EvalResult& result, Variant v) {
  for (const auto& a : result.aggregates) {
    if (a.variant == v) return a;
  }
  return std::nullopt;
}

/// Table-1-shaped metrics for this experiment (one dataset column group).
inline DatasetMetrics dataset_metrics(const EvalResult& result, const std::string& name) {
  DatasetMetrics d;
  d.name = name;
  for (const auto& a : result.aggregates) d.rows[std::string(to_string(a.variant))] = {a.ndcg, a.hit};
  return d;
}

/// summary.json: settings, per-variant aggregates, improvement rows and every
/// per-user record. Contains no timing, so reruns are byte-identical.
inline nlohmann::json summary_json(const EvalResult& result, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["dataset"] = cfg.dataset_name;
  j["metric_k"] = result.metric_k;
  j["pool_mode"] = cfg.pool_mode == PoolMode::closed ? "closed" : "open";
  j["pool_size"] = cfg.pipeline.candidate_pool_size;
  j["seed"] = cfg.pipeline.seed;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& a : result.aggregates) rows.push_back(aggregate_json(a, result.metric_k));
  j["variants"] = std::move(rows);

  const auto table = format_table1({dataset_metrics(result, cfg.dataset_name)}, result.metric_k);
  nlohmann::json improvement = nlohmann::json::object();
  for (const auto& cell : table.improvements) improvement[cell.metric] = cell.text;
  j["improvement_over_best_baseline"] = std::move(improvement);
  nlohmann::json gains = nlohmann::json::object();
  for (const auto& g : table.ablation_gains) gains[g.row][g.metric] = g.text;
  j["gain_over_vanilla_rag"] = std::move(gains);

  j["missing_ground_truth"] = result.missing_ground_truth;
  j["failure_fraction"] = result.failure_fraction;
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : result.records) recs.push_back(record_json(r, result.metric_k));
  j["records"] = std::move(recs);
  return j;
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

/// Writes summary.json, report.md, traces/<variant>/<user>.jsonl and
/// rankings/<variant>/<user>.json under out_dir. Returns report.md's text.
inline std::string write_experiment(const EvalResult& result, const ExperimentConfig& cfg,
                                    const std::filesystem::path& out_dir) {
  write_text(out_dir / "summary.json", summary_json(result, cfg).dump(2) + "\n");
  const auto table = format_table1({dataset_metrics(result, cfg.dataset_name)}, result.metric_k);
  write_text(out_dir / "report.md", table.markdown);
  for (const auto& r : result.records) {
    if (r.failed) continue;
    const std::string v(to_string(r.variant));
    write_text(out_dir / "traces" / v / (r.user_id + ".jsonl"), r.trace);
    nlohmann::json rj = record_json(r, result.metric_k);
    rj["explanation"] = r.explanation;
    write_text(out_dir / "rankings" / v / (r.user_id + ".json"), detail::dump(rj) + "\n");
  }
  return table.markdown;
}

/// Recomputes aggregates from the per-user records of a summary.json and
/// compares them with the stored aggregate rows (exact equality).
inline bool reaggregation_matches(const nlohmann::json& summary) {
  const std::size_t k = summary.at("metric_k").get<std::size_t>();
  std::vector<UserRecord> records;
  for (const auto& rj : summary.at("records")) {
    UserRecord r;
    r.variant = parse_variant(rj.at("variant").get<std::string>());
    r.failed = rj.at("failed").get<bool>();
    r.ndcg = rj.at(metric_key("ndcg", k)).get<double>();
    r.hit = rj.at(metric_key("hit", k)).get<int>();
    records.push_back(std::move(r));
  }
  std::vector<Variant> variants;
  for (const auto& row : summary.at("variants")) variants.push_back(parse_variant(row.at("variant").get<std::string>()));
  const auto again = aggregate(records, variants);
  for (std::size_t i = 0; i < again.size(); ++i) {
    if (nlohmann::json(aggregate_json(again[i], k)) != summary.at("variants")[i]) return false;
  }
  return true;
}

}  // namespace arag
