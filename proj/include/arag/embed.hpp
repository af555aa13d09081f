/**
 * @file embed.hpp
 * @brief Text embeddings, cosine similarity and exact top-k recall.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/corpus.hpp"
#include "arag/error.hpp"
#include "arag/hash.hpp"

namespace arag {

using EmbeddingVector = std::vector<double>;

inline constexpr std::size_t kDefaultDimension = 256;

/// Lowercased ASCII alphanumeric runs. Bytes >= 0x80 are kept inside tokens
/// so UTF-8 words are not shredded.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) != 0 || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// f_Emb. Implementations must be deterministic and thread-safe for const calls.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const noexcept = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

/// Hashed bag-of-tokens: each token adds 1 to bucket fnv1a(token) mod d, then
/// the vector is L2-normalized. Empty text maps to the zero vector.
class HashedEmbedder final : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dimension = kDefaultDimension) : dimension_(dimension) {
    if (dimension_ == 0) throw UsageError("embedding dimension must be >= 1");
  }

  std::size_t dimension() const noexcept override { return dimension_; }

  EmbeddingVector embed(std::string_view text) const override {
    EmbeddingVector v(dimension_, 0.0);
    for (const auto& tok : tokenize(text)) v[fnv1a64(tok) % dimension_] += 1.0;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (double& x : v) x *= inv;
    }
    return v;
  }

 private:
  std::size_t dimension_;
};

inline EmbeddingVector embed_text(std::string_view text, std::size_t dimension = kDefaultDimension) {
  return HashedEmbedder(dimension).embed(text);
}

inline double l2_norm(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

namespace detail {

inline double cosine_with_norms(std::span<const double> a, double norm_a, std::span<const double> b,
                                double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  const double c = dot(a, b) / (norm_a * norm_b);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace detail

/// dot(a, b) / (|a| |b|), or 0 when either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
  return detail::cosine_with_norms(a, l2_norm(a), b, l2_norm(b));
}

/// Embeds the metadata of the user's max_items most recent interactions
/// (session newest first, then long-term newest first).
inline EmbeddingVector embed_user(const UserContext& context, const Catalog& catalog,
                                  const Embedder& embedder, std::size_t max_items,
                                  std::size_t max_reviews = 3) {
  std::string text;
  std::size_t used = 0;
  for (const Interaction* x : context.newest_first()) {
    if (used == max_items) break;
    text += metadata_text(catalog.at(x->item_id), max_reviews);
    ++used;
  }
  return embedder.embed(text);
}

struct ScoredItem {
  std::string id;
  double score = 0.0;

  bool operator==(const ScoredItem&) const = default;
};

/// I0: descending by score, ties by id ascending.
using RecallSet = std::vector<ScoredItem>;

/// Strict weak order used for every ranked list: score desc, then id asc.
inline bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

/// Immutable id -> vector table for exact brute-force search.
class VectorIndex {
 public:
  VectorIndex() = default;

  explicit VectorIndex(std::size_t dimension) : dimension_(dimension) {}

  void add(std::string id, EmbeddingVector v) {
    if (dimension_ == 0) dimension_ = v.size();
    if (v.size() != dimension_) {
      throw DataError("vector for \"" + id + "\" has dimension " + std::to_string(v.size()) +
                      ", index expects " + std::to_string(dimension_));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw DataError("vector for \"" + id + "\" has a non-finite entry");
    }
    if (!lookup_.emplace(id, ids_.size()).second) throw DataError("duplicate vector id \"" + id + "\"");
    norms_.push_back(l2_norm(v));
    ids_.push_back(std::move(id));
    vectors_.push_back(std::move(v));
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const EmbeddingVector& vector(std::size_t i) const { return vectors_.at(i); }
  double norm(std::size_t i) const { return norms_.at(i); }

  const EmbeddingVector* find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    return it == lookup_.end() ? nullptr : &vectors_[it->second];
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> ids_;
  std::vector<EmbeddingVector> vectors_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

inline VectorIndex build_index(const Catalog& catalog, const Embedder& embedder, std::size_t max_reviews = 3) {
  VectorIndex index(embedder.dimension());
  for (const auto& item : catalog) index.add(item.id, embedder.embed(metadata_text(item, max_reviews)));
  return index;
}

/// argtop_k of cosine(item, query). Exact; returns fewer than k items only
/// when the index is smaller than k.
inline RecallSet retrieve_topk(const VectorIndex& index, std::span<const double> query, std::size_t k) {
  if (k == 0) throw UsageError("retrieve_topk: k must be >= 1");
  if (index.empty()) return {};
  if (query.size() != index.dimension()) {
    throw DataError("retrieve_topk: query dimension " + std::to_string(query.size()) +
                    " does not match index dimension " + std::to_string(index.dimension()));
  }
  const double qnorm = l2_norm(query);
  RecallSet all;
  all.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    all.push_back({index.ids()[i], detail::cosine_with_norms(index.vector(i), index.norm(i), query, qnorm)});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), ranks_before);
  all.resize(n);
  return all;
}

/// Vector cache: one {"id": ..., "vector": [...]} object per line.
inline void save_vector_cache(const VectorIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < index.size(); ++i) {
    out << nlohmann::json{{"id", index.ids()[i]}, {"vector", index.vector(i)}}.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline VectorIndex load_vector_cache(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  VectorIndex index;
  try {
    detail::for_each_jsonl(in, [&](const nlohmann::json& obj, std::size_t) {
      index.add(obj.at("id").get<std::string>(), obj.at("vector").get<EmbeddingVector>());
    });
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return index;
}

/// Uses the cache when it covers exactly the catalog at the embedder's
/// dimension; otherwise embeds everything and rewrites the cache.
inline VectorIndex load_or_build_index(const Catalog& catalog, const Embedder& embedder,
                                       const std::filesystem::path& cache, std::size_t max_reviews = 3) {
  if (!cache.empty() && std::filesystem::exists(cache)) {
    VectorIndex cached = load_vector_cache(cache);
    bool usable = cached.size() == catalog.size() && cached.dimension() == embedder.dimension();
    for (std::size_t i = 0; usable && i < cached.size(); ++i) {
      usable = catalog.items()[i].id == cached.ids()[i];
    }
    if (usable) return cached;
  }
  VectorIndex index = build_index(catalog, embedder, max_reviews);
  if (!cache.empty()) save_vector_cache(index, cache);
  return index;
}

}  // namespace arag
