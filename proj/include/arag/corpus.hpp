/**
 * @file corpus.hpp
 * @brief Items, interactions and user contexts; JSONL ingestion and the
 *        leave-last-out evaluation split.
 */

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/error.hpp"
#include "arag/json_text.hpp"

namespace arag {

struct Item {
  std::string id;
  std::string title;
  std::string description;
  std::vector<std::string> reviews;
  std::string category;

  bool operator==(const Item&) const = default;
};

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;  ///< epoch seconds
  std::optional<double> rating;
  std::optional<std::string> review_text;

  bool operator==(const Interaction&) const = default;
};

/// u = (long-term history, current session). Both lists are chronological.
struct UserContext {
  std::string user_id;
  std::vector<Interaction> long_term;
  std::vector<Interaction> session;

  bool empty() const noexcept { return long_term.empty() && session.empty(); }
  std::size_t size() const noexcept { return long_term.size() + session.size(); }

  /// Interactions newest first: session (newest first), then long-term (newest first).
  std::vector<const Interaction*> newest_first() const {
    std::vector<const Interaction*> out;
    out.reserve(size());
    for (auto it = session.rbegin(); it != session.rend(); ++it) out.push_back(&*it);
    for (auto it = long_term.rbegin(); it != long_term.rend(); ++it) out.push_back(&*it);
    return out;
  }

  bool operator==(const UserContext&) const = default;
};

struct EvalInstance {
  UserContext context;
  std::string ground_truth;
};

class Catalog;
inline Catalog parse_catalog(std::istream& in, const std::string& source = "catalog");

/// Immutable set of items with id lookup. Iteration follows file order.
class Catalog {
 public:
  Catalog() = default;

  /// Throws DataError on an empty/duplicate id or an empty title.
  explicit Catalog(std::vector<Item> items) {
    for (auto& item : items) add(std::move(item), 0);
  }

  const Item* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  const Item& at(std::string_view id) const {
    if (const Item* item = find(id)) return *item;
    throw DataError("unknown item id \"" + std::string(id) + "\"");
  }

  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const std::vector<Item>& items() const noexcept { return items_; }
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

 private:
  friend Catalog parse_catalog(std::istream& in, const std::string& source);

  void add(Item item, std::size_t line) {
    const std::string where = line > 0 ? "line " + std::to_string(line) + ": " : "";
    if (item.id.empty()) throw DataError(where + "item id must be non-empty");
    if (item.title.empty()) throw DataError(where + "item \"" + item.id + "\" has an empty title");
    auto [it, inserted] = index_.emplace(item.id, items_.size());
    if (!inserted) {
      std::string msg = where + "duplicate item id \"" + item.id + "\"";
      if (line > 0) msg += " (first defined on line " + std::to_string(lines_[it->second]) + ")";
      throw DataError(msg);
    }
    items_.push_back(std::move(item));
    lines_.push_back(line);
  }

  std::vector<Item> items_;
  std::vector<std::size_t> lines_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

inline const nlohmann::json* field(const nlohmann::json& obj, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    auto it = obj.find(name);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

inline std::string text_field(const nlohmann::json& obj, std::initializer_list<const char*> names,
                              bool required, const char* label) {
  const nlohmann::json* v = field(obj, names);
  if (v == nullptr) {
    if (required) throw DataError(std::string("missing field \"") + label + "\"");
    return {};
  }
  if (v->is_string()) return v->get<std::string>();
  // Amazon metadata stores some text fields as arrays of strings.
  if (v->is_array()) {
    std::string joined;
    for (const auto& part : *v) {
      if (!part.is_string()) throw DataError(std::string("field \"") + label + "\" must be text");
      if (!joined.empty()) joined += ' ';
      joined += part.get<std::string>();
    }
    return joined;
  }
  throw DataError(std::string("field \"") + label + "\" must be a string");
}

template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw DataError("line " + std::to_string(lineno) + ": expected a JSON object");
    try {
      fn(obj, lineno);
    } catch (const DataError& e) {
      const std::string what = e.what();
      if (what.rfind("line ", 0) == 0) throw;
      throw DataError("line " + std::to_string(lineno) + ": " + what);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline Item item_from_json(const nlohmann::json& obj) {
  Item item;
  item.id = detail::text_field(obj, {"id", "asin"}, true, "id");
  item.title = detail::text_field(obj, {"title"}, true, "title");
  item.description = detail::text_field(obj, {"description"}, false, "description");
  item.category = detail::text_field(obj, {"category", "main_cat"}, false, "category");
  if (const auto* reviews = detail::field(obj, {"reviews"})) {
    if (!reviews->is_array()) throw DataError("field \"reviews\" must be an array of strings");
    for (const auto& r : *reviews) {
      if (!r.is_string()) throw DataError("field \"reviews\" must be an array of strings");
      item.reviews.push_back(r.get<std::string>());
    }
  }
  return item;
}

inline nlohmann::json to_json(const Item& item) {
  return {{"id", item.id},
          {"title", item.title},
          {"description", item.description},
          {"reviews", item.reviews},
          {"category", item.category}};
}

inline Catalog parse_catalog(std::istream& in, const std::string& source) {
  Catalog catalog;
  try {
    detail::for_each_jsonl(in, [&](const nlohmann::json& obj, std::size_t line) {
      catalog.add(item_from_json(obj), line);
    });
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  return catalog;
}

/// Reads a JSONL catalog (one item per line). Blank lines are skipped.
inline Catalog load_catalog(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_catalog(in, path.string());
}

inline Interaction interaction_from_json(const nlohmann::json& obj) {
  Interaction x;
  x.user_id = detail::text_field(obj, {"user_id", "reviewerID"}, true, "user_id");
  x.item_id = detail::text_field(obj, {"item_id", "asin"}, true, "item_id");
  const auto* ts = detail::field(obj, {"timestamp", "unixReviewTime"});
  if (ts == nullptr || !ts->is_number_integer()) throw DataError("field \"timestamp\" must be an integer");
  x.timestamp = ts->get<std::int64_t>();
  if (x.timestamp < 0) throw DataError("timestamp must be >= 0");
  if (const auto* rating = detail::field(obj, {"rating", "overall"})) {
    if (!rating->is_number()) throw DataError("field \"rating\" must be a number");
    const double r = rating->get<double>();
    if (!(r >= 1.0 && r <= 5.0)) throw DataError("rating must lie in [1, 5]");
    x.rating = r;
  }
  if (detail::field(obj, {"review_text", "reviewText"}) != nullptr) {
    x.review_text = detail::text_field(obj, {"review_text", "reviewText"}, false, "review_text");
  }
  return x;
}

inline nlohmann::json to_json(const Interaction& x) {
  nlohmann::json j = {{"user_id", x.user_id}, {"item_id", x.item_id}, {"timestamp", x.timestamp}};
  if (x.rating) j["rating"] = *x.rating;
  if (x.review_text) j["review_text"] = *x.review_text;
  return j;
}

inline std::vector<Interaction> parse_interactions(std::istream& in, const std::string& source = "interactions") {
  std::vector<Interaction> log;
  try {
    detail::for_each_jsonl(in, [&](const nlohmann::json& obj, std::size_t) {
      log.push_back(interaction_from_json(obj));
    });
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  return log;
}

inline std::vector<Interaction> load_interactions(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_interactions(in, path.string());
}

inline nlohmann::json to_json(const UserContext& ctx) {
  nlohmann::json lt = nlohmann::json::array();
  nlohmann::json st = nlohmann::json::array();
  for (const auto& x : ctx.long_term) lt.push_back(to_json(x));
  for (const auto& x : ctx.session) st.push_back(to_json(x));
  return {{"user_id", ctx.user_id}, {"long_term", std::move(lt)}, {"session", std::move(st)}};
}

inline UserContext context_from_json(const nlohmann::json& obj) {
  UserContext ctx;
  ctx.user_id = detail::text_field(obj, {"user_id"}, true, "user_id");
  for (const auto& x : obj.at("long_term")) ctx.long_term.push_back(interaction_from_json(x));
  for (const auto& x : obj.at("session")) ctx.session.push_back(interaction_from_json(x));
  return ctx;
}

/// Groups a raw log into one context per user (sorted by user id).
///
/// Per user, interactions are ordered by (timestamp, item_id). The longest
/// suffix whose consecutive gaps are all < session_gap is the session; the
/// remainder is long-term history.
inline std::vector<UserContext> build_contexts(std::vector<Interaction> log, const Catalog& catalog,
                                               std::int64_t session_gap = 3600) {
  if (session_gap <= 0) throw UsageError("session_gap must be > 0");

  std::vector<std::string> unknown;
  for (const auto& x : log) {
    if (!catalog.contains(x.item_id)) unknown.push_back(x.item_id);
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
    std::string msg = "interactions reference unknown item ids:";
    for (const auto& id : unknown) msg += " " + id;
    throw DataError(msg);
  }

  std::map<std::string, std::vector<Interaction>> by_user;
  for (auto& x : log) by_user[x.user_id].push_back(std::move(x));

  std::vector<UserContext> out;
  out.reserve(by_user.size());
  for (auto& [user, xs] : by_user) {
    std::stable_sort(xs.begin(), xs.end(), [](const Interaction& a, const Interaction& b) {
      return std::tie(a.timestamp, a.item_id) < std::tie(b.timestamp, b.item_id);
    });
    std::size_t start = xs.size() - 1;
    while (start > 0 && xs[start].timestamp - xs[start - 1].timestamp < session_gap) --start;

    UserContext ctx;
    ctx.user_id = user;
    ctx.long_term.assign(std::make_move_iterator(xs.begin()),
                         std::make_move_iterator(xs.begin() + static_cast<std::ptrdiff_t>(start)));
    ctx.session.assign(std::make_move_iterator(xs.begin() + static_cast<std::ptrdiff_t>(start)),
                       std::make_move_iterator(xs.end()));
    out.push_back(std::move(ctx));
  }
  return out;
}

/// Leave-last-out: removes the final session interaction and returns it as ground truth.
inline EvalInstance holdout_split(UserContext context) {
  if (context.session.empty()) {
    throw DataError("user \"" + context.user_id + "\" has an empty session; nothing to hold out");
  }
  EvalInstance inst;
  inst.ground_truth = context.session.back().item_id;
  context.session.pop_back();
  inst.context = std::move(context);
  return inst;
}

/// Labelled, deterministic rendering of T(i): title, description, then at
/// most max_reviews reviews.
inline std::string metadata_text(const Item& item, std::size_t max_reviews = 3) {
  std::string out;
  out += "Title: " + item.title + "\n";
  out += "Description: " + item.description + "\n";
  const std::size_t n = std::min(max_reviews, item.reviews.size());
  for (std::size_t i = 0; i < n; ++i) {
    out += "Review " + std::to_string(i + 1) + ": " + item.reviews[i] + "\n";
  }
  return out;
}

}  // namespace arag
