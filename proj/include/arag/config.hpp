/**
 * @file config.hpp
 * @brief JSON run configuration. Relative paths resolve against the config
 *        file's directory. API keys are read from the environment only.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/error.hpp"
#include "arag/eval.hpp"
#include "arag/pipeline.hpp"

namespace arag {

struct BackendConfig {
  std::string kind = "mock";  ///< remote, mock, replay, record
  std::string record_inner = "remote";  ///< backend wrapped by "record": remote or mock
  std::filesystem::path cassette;
  std::filesystem::path script;  ///< mock: optional {digest, response_text} JSONL
  bool strict = false;           ///< mock: fail on unscripted requests
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo-0125";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_attempts = 3;
  int initial_backoff_ms = 1000;
};

struct EmbedderConfig {
  std::string kind = "hashed";  ///< hashed or remote
  std::size_t dimension = kDefaultDimension;
  std::string model = "text-embedding-3-small";
  std::filesystem::path cache;
};

struct Config {
  std::filesystem::path catalog;
  std::filesystem::path interactions;
  std::filesystem::path out_dir = "out";
  std::filesystem::path prompts_dir;
  std::string dataset_name = "dataset";
  std::int64_t session_gap = 3600;
  ExperimentConfig experiment;
  BackendConfig backend;
  EmbedderConfig embedder;
  std::optional<std::size_t> max_users;
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

inline void read_path(const nlohmann::json& j, const char* key, const std::filesystem::path& base,
                      std::filesystem::path& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    std::filesystem::path p = it->get<std::string>();
    out = p.is_relative() ? base / p : p;
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw DataError(std::string(where) + ": unknown key \"" + it.key() + "\"");
  }
}

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j, const std::filesystem::path& base = ".") {
  if (!j.is_object()) throw DataError("config: expected a JSON object");
  detail::reject_unknown(j,
                         {"catalog", "interactions", "out_dir", "prompts_dir", "dataset_name", "session_gap", "seed",
                          "k", "theta", "m_min", "pool_size", "pool_mode", "metric_k", "variants", "failure_limit",
                          "concurrency", "max_users", "agent", "backend", "embedder"},
                         "config");
  if (j.contains("api_key")) throw DataError("config: api keys are read from the environment, not the config file");
  Config c;
  try {
    detail::read_path(j, "catalog", base, c.catalog);
    detail::read_path(j, "interactions", base, c.interactions);
    c.out_dir = base / c.out_dir;
    detail::read_path(j, "out_dir", base, c.out_dir);
    detail::read_path(j, "prompts_dir", base, c.prompts_dir);
    detail::read_opt(j, "dataset_name", c.dataset_name);
    detail::read_opt(j, "session_gap", c.session_gap);

    auto& e = c.experiment;
    auto& p = e.pipeline;
    detail::read_opt(j, "seed", p.seed);
    detail::read_opt(j, "k", p.k);
    detail::read_opt(j, "theta", p.theta);
    detail::read_opt(j, "m_min", p.m_min);
    detail::read_opt(j, "pool_size", p.candidate_pool_size);
    detail::read_opt(j, "concurrency", p.concurrency_cap);
    detail::read_opt(j, "metric_k", e.metric_k);
    detail::read_opt(j, "failure_limit", e.failure_limit);
    if (j.contains("max_users")) c.max_users = j.at("max_users").get<std::size_t>();
    if (auto it = j.find("pool_mode"); it != j.end()) {
      const auto mode = it->get<std::string>();
      if (mode == "closed") {
        e.pool_mode = PoolMode::closed;
      } else if (mode == "open") {
        e.pool_mode = PoolMode::open;
      } else {
        throw DataError("config: pool_mode must be \"closed\" or \"open\"");
      }
    }
    if (auto it = j.find("variants"); it != j.end()) {
      e.variants.clear();
      for (const auto& v : *it) e.variants.push_back(parse_variant(v.get<std::string>()));
    }
    if (auto it = j.find("agent"); it != j.end()) {
      detail::reject_unknown(*it,
                             {"max_history_items", "max_reviews", "history_chars", "max_tokens_uua", "max_tokens_nli",
                              "max_tokens_csa", "max_tokens_ira", "temperature", "model_tag"},
                             "config.agent");
      auto& a = p.agent;
      detail::read_opt(*it, "max_history_items", a.max_history_items);
      detail::read_opt(*it, "max_reviews", a.max_reviews);
      detail::read_opt(*it, "history_chars", a.history_chars);
      detail::read_opt(*it, "max_tokens_uua", a.max_tokens_uua);
      detail::read_opt(*it, "max_tokens_nli", a.max_tokens_nli);
      detail::read_opt(*it, "max_tokens_csa", a.max_tokens_csa);
      detail::read_opt(*it, "max_tokens_ira", a.max_tokens_ira);
      detail::read_opt(*it, "temperature", a.temperature);
      detail::read_opt(*it, "model_tag", a.model_tag);
    }
    if (auto it = j.find("backend"); it != j.end()) {
      detail::reject_unknown(*it,
                             {"kind", "record_inner", "cassette", "script", "strict", "base_url", "model",
                              "api_key_env", "max_attempts", "initial_backoff_ms"},
                             "config.backend");
      auto& b = c.backend;
      detail::read_opt(*it, "kind", b.kind);
      detail::read_opt(*it, "record_inner", b.record_inner);
      detail::read_path(*it, "cassette", base, b.cassette);
      detail::read_path(*it, "script", base, b.script);
      detail::read_opt(*it, "strict", b.strict);
      detail::read_opt(*it, "base_url", b.base_url);
      detail::read_opt(*it, "model", b.model);
      detail::read_opt(*it, "api_key_env", b.api_key_env);
      detail::read_opt(*it, "max_attempts", b.max_attempts);
      detail::read_opt(*it, "initial_backoff_ms", b.initial_backoff_ms);
    }
    if (auto it = j.find("embedder"); it != j.end()) {
      detail::reject_unknown(*it, {"kind", "dimension", "model", "cache"}, "config.embedder");
      detail::read_opt(*it, "kind", c.embedder.kind);
      detail::read_opt(*it, "dimension", c.embedder.dimension);
      detail::read_opt(*it, "model", c.embedder.model);
      detail::read_path(*it, "cache", base, c.embedder.cache);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("config: ") + ex.what());
  }
  c.experiment.dataset_name = c.dataset_name;
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

/// Snapshot recorded in run manifests (paths as given, no secrets).
inline nlohmann::json config_snapshot(const Config& c) {
  const auto& p = c.experiment.pipeline;
  nlohmann::json variants = nlohmann::json::array();
  for (Variant v : c.experiment.variants) variants.push_back(std::string(to_string(v)));
  return {{"catalog", c.catalog.string()},
          {"interactions", c.interactions.string()},
          {"dataset_name", c.dataset_name},
          {"session_gap", c.session_gap},
          {"seed", p.seed},
          {"k", p.k},
          {"theta", p.theta},
          {"m_min", p.m_min},
          {"pool_size", p.candidate_pool_size},
          {"pool_mode", c.experiment.pool_mode == PoolMode::closed ? "closed" : "open"},
          {"metric_k", c.experiment.metric_k},
          {"variants", variants},
          {"failure_limit", c.experiment.failure_limit},
          {"concurrency", p.concurrency_cap},
          {"backend", {{"kind", c.backend.kind}, {"model", c.backend.model}, {"base_url", c.backend.base_url}}},
          {"embedder", {{"kind", c.embedder.kind}, {"dimension", c.embedder.dimension}}}};
}

}  // namespace arag
