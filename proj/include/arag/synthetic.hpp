/**
 * @file synthetic.hpp
 * @brief Seeded generator for small attribute-structured datasets.
 *
 * The catalog holds one item per combination of attribute values (one value
 * per dimension); its title lists those values and its description is
 * filler. Each user has a long-term taste (one value per dimension) and a
 * session intent that departs from it in `shifted_dims` dimensions. Long-term items follow the taste loosely,
 * session items follow the intent closely, and the held-out last session item
 * matches the intent in every dimension.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "arag/corpus.hpp"
#include "arag/error.hpp"
#include "arag/hash.hpp"
#include "arag/json_text.hpp"

namespace arag {

struct SyntheticOptions {
  std::size_t users = 100;
  std::size_t dimensions = 4;
  std::size_t values_per_dimension = 6;
  std::size_t long_term_items = 12;
  std::size_t session_items = 3;  ///< before the held-out item
  std::size_t shifted_dims = 2;
  double long_term_match = 0.5;
  double session_match = 0.9;
  bool novel_shift = false;  ///< long-term history is uniform over the shifted dimensions
  std::size_t description_words = 10;
  std::uint64_t seed = 7;
};

struct SyntheticDataset {
  std::vector<Item> items;
  std::vector<Interaction> interactions;
};

namespace detail {

inline const std::vector<std::vector<std::string>>& attribute_vocabulary() {
  static const std::vector<std::vector<std::string>> vocab = {
      {"jacket", "sneaker", "backpack", "sweater", "blender", "lamp", "headphones", "kettle"},
      {"crimson", "navy", "olive", "ivory", "charcoal", "mustard", "teal", "blush"},
      {"wool", "leather", "canvas", "denim", "bamboo", "steel", "ceramic", "linen"},
      {"vintage", "minimalist", "rugged", "boho", "sporty", "classic", "modern", "rustic"},
      {"acme", "northpeak", "solace", "vertex", "harbor", "ember", "lumen", "quill"},
  };
  return vocab;
}

inline const std::vector<std::string>& filler_vocabulary() {
  static const std::vector<std::string> words = {
      "great",   "quality", "everyday", "value",   "comfortable", "durable", "gift",    "popular",
      "fits",    "design",  "premium",  "light",  "compact",     "soft",    "sturdy",  "easy",
      "perfect", "new",     "season",   "weekend", "travel",     "office",  "home",    "outdoor",
      "simple",  "bright",  "smooth",   "crafted", "reliable",   "handy",   "stylish", "warm",
  };
  return words;
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(const SyntheticOptions& opts) {
  const auto& vocab = detail::attribute_vocabulary();
  const auto& filler = detail::filler_vocabulary();
  if (opts.dimensions < 1 || opts.dimensions > vocab.size()) {
    throw UsageError("synthetic: dimensions must lie in [1, " + std::to_string(vocab.size()) + "]");
  }
  if (opts.values_per_dimension < 2 || opts.values_per_dimension > vocab.front().size()) {
    throw UsageError("synthetic: values_per_dimension must lie in [2, " + std::to_string(vocab.front().size()) + "]");
  }
  if (opts.shifted_dims > opts.dimensions) throw UsageError("synthetic: shifted_dims exceeds dimensions");
  if (opts.users == 0 || opts.session_items == 0) throw UsageError("synthetic: users and session_items must be >= 1");
  const std::size_t D = opts.dimensions;
  const std::size_t V = opts.values_per_dimension;
  std::size_t combos = 1;
  for (std::size_t d = 0; d < D; ++d) combos *= V;
  if (combos > 50000) throw UsageError("synthetic: too many attribute combinations");

  SeededRng rng(opts.seed);
  SyntheticDataset out;

  // One catalog item per attribute combination; item n encodes its
  // attributes in base V, first dimension most significant.
  auto index_of = [&](const std::vector<std::size_t>& attrs) {
    std::size_t n = 0;
    for (std::size_t d = 0; d < D; ++d) n = n * V + attrs[d];
    return n;
  };
  auto item_id = [](const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05zu", prefix, n);
    return std::string(buf);
  };
  out.items.reserve(combos);
  for (std::size_t n = 0; n < combos; ++n) {
    Item item;
    item.id = item_id("P", n);
    std::size_t rest = n;
    std::vector<std::size_t> attrs(D);
    for (std::size_t d = D; d-- > 0;) {
      attrs[d] = rest % V;
      rest /= V;
    }
    for (std::size_t d = 0; d < D; ++d) {
      if (!item.title.empty()) item.title += ' ';
      item.title += vocab[d][attrs[d]];
    }
    for (std::size_t w = 0; w < opts.description_words; ++w) {
      if (!item.description.empty()) item.description += ' ';
      item.description += filler[rng.below(filler.size())];
    }
    item.category = vocab[0][attrs[0]];
    out.items.push_back(std::move(item));
  }

  auto random_attrs = [&] {
    std::vector<std::size_t> a(D);
    for (auto& v : a) v = rng.below(V);
    return a;
  };
  // Draw around `target`, never landing on the held-out combination.
  auto noisy = [&](const std::vector<std::size_t>& target, const std::vector<double>& p, std::size_t avoid) {
    for (;;) {
      std::vector<std::size_t> a(D);
      for (std::size_t d = 0; d < D; ++d) a[d] = rng.unit() < p[d] ? target[d] : rng.below(V);
      if (index_of(a) != avoid) return index_of(a);
    }
  };

  const std::int64_t day = 86400;
  for (std::size_t u = 0; u < opts.users; ++u) {
    const std::string user = item_id("U", u);
    const auto taste = random_attrs();
    auto intent = taste;
    std::vector<std::size_t> dims(D);
    for (std::size_t d = 0; d < D; ++d) dims[d] = d;
    rng.shuffle(dims);
    std::vector<double> long_term_p(D, opts.long_term_match);
    for (std::size_t s = 0; s < opts.shifted_dims; ++s) {
      const std::size_t d = dims[s];
      intent[d] = (taste[d] + 1 + rng.below(V - 1)) % V;
      if (opts.novel_shift) long_term_p[d] = 0.0;
    }
    const std::vector<double> session_p(D, opts.session_match);
    const std::size_t held_out = index_of(intent);

    std::int64_t t = 1'600'000'000 + static_cast<std::int64_t>(u) * 1000;
    auto add = [&](std::size_t n, std::int64_t gap) {
      t += gap;
      Interaction x;
      x.user_id = user;
      x.item_id = out.items[n].id;
      x.timestamp = t;
      x.rating = static_cast<double>(3 + rng.below(3));
      out.interactions.push_back(std::move(x));
    };
    for (std::size_t i = 0; i < opts.long_term_items; ++i) add(noisy(taste, long_term_p, held_out), 3 * day);
    add(noisy(intent, session_p, held_out), 30 * day);
    for (std::size_t i = 1; i < opts.session_items; ++i) add(noisy(intent, session_p, held_out), 300);
    add(held_out, 300);
  }
  return out;
}

inline void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& catalog_path,
                            const std::filesystem::path& interactions_path) {
  auto write = [](const std::filesystem::path& path, const auto& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : rows) out << detail::dump(to_json(r)) << '\n';
  };
  write(catalog_path, data.items);
  write(interactions_path, data.interactions);
}

}  // namespace arag
