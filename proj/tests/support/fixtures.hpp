// Shared test data and helpers.

#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/arag.hpp"

namespace fixtures {

inline arag::Catalog make_catalog(const std::vector<arag::Item>& items) {
  return arag::Catalog(items);
}

/// Twelve small clothing/home items, ids I01..I12.
inline std::vector<arag::Item> small_items() {
  const char* rows[][3] = {
      {"I01", "Navy wool sweater", "Warm crew neck knit"},
      {"I02", "Grey wool scarf", "Soft ribbed scarf"},
      {"I03", "Leather ankle boots", "Brown boots with side zip"},
      {"I04", "Canvas tote bag", "Roomy everyday tote"},
      {"I05", "Ceramic coffee mug", "Stoneware mug, 350 ml"},
      {"I06", "Bamboo cutting board", "Reversible kitchen board"},
      {"I07", "Navy denim jacket", "Classic trucker jacket"},
      {"I08", "Wool beanie", "Chunky knit hat"},
      {"I09", "Steel water bottle", "Insulated, keeps drinks cold"},
      {"I10", "Linen shirt", "Breathable summer shirt"},
      {"I11", "Leather belt", "Full grain belt with brass buckle"},
      {"I12", "Cotton socks", "Pack of five"},
  };
  std::vector<arag::Item> out;
  for (const auto& r : rows) {
    arag::Item item;
    item.id = r[0];
    item.title = r[1];
    item.description = r[2];
    item.reviews = {"Good value", "Would buy again"};
    out.push_back(item);
  }
  return out;
}

inline arag::Interaction hit(const std::string& user, const std::string& item, std::int64_t ts,
                             std::optional<double> rating = std::nullopt) {
  arag::Interaction x;
  x.user_id = user;
  x.item_id = item;
  x.timestamp = ts;
  x.rating = rating;
  return x;
}

/// User "u1": long-term I03, I04, I05; session I01, I02 (newest).
inline arag::UserContext small_context() {
  arag::UserContext ctx;
  ctx.user_id = "u1";
  ctx.long_term = {hit("u1", "I03", 1000, 4.0), hit("u1", "I04", 90000), hit("u1", "I05", 180000, 5.0)};
  ctx.session = {hit("u1", "I01", 500000, 5.0), hit("u1", "I02", 500600)};
  return ctx;
}

/// Items with the given ids, in that order.
inline std::vector<arag::Item> pick(const arag::Catalog& catalog, const std::vector<std::string>& ids) {
  std::vector<arag::Item> out;
  for (const auto& id : ids) out.push_back(catalog.at(id));
  return out;
}

/// Well-formed replies for every agent: NLI score 0.8, rankings reverse the
/// listed candidates.
inline std::string scripted_reply(const arag::ChatRequest& r) {
  if (r.agent == "user_understanding") return "Likes warm knitwear in navy and grey.";
  if (r.agent == "nli") return R"({"score": 0.8, "rationale": "fits the knitwear theme"})";
  if (r.agent == "context_summary") return "Wool knitwear dominates the aligned items.";
  std::vector<std::string> ids;
  const std::string& text = r.messages.back().content;
  for (std::size_t pos = text.find("[id: "); pos != std::string::npos; pos = text.find("[id: ", pos + 1)) {
    if (pos > 0 && text[pos - 1] != '\n') continue;  // history lines start with "- "
    const auto close = text.find(']', pos);
    ids.push_back(text.substr(pos + 5, close - pos - 5));
  }
  nlohmann::json ranking = nlohmann::json::array();
  for (auto it = ids.rbegin(); it != ids.rend(); ++it) ranking.push_back(*it);
  return arag::detail::dump({{"ranking", ranking}, {"explanation", "reverse order"}});
}

/// Monotonic fake clock for deterministic traces.
inline arag::Blackboard::Clock counting_clock() {
  auto t = std::make_shared<std::atomic<std::int64_t>>(1'700'000'000'000);
  return [t] { return t->fetch_add(1); };
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("arag_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Synthetic dataset split into evaluation instances, sorted by user.
struct SyntheticSetup {
  arag::Catalog catalog;
  std::vector<arag::EvalInstance> instances;
};

inline SyntheticSetup synthetic_setup(const arag::SyntheticOptions& opts) {
  const auto data = arag::generate_synthetic(opts);
  SyntheticSetup s{make_catalog(data.items), {}};
  for (const auto& ctx : arag::build_contexts(data.interactions, s.catalog)) {
    s.instances.push_back(arag::holdout_split(ctx));
  }
  return s;
}

// Published aggregates of the reference results table (NDCG@5, Hit@5).
inline std::vector<arag::DatasetMetrics> published_table() {
  return {
      {"Clothing",
       {{"recency", {0.30915, 0.3945}},
        {"vanilla_rag", {0.29884, 0.3792}},
        {"arag_no_nli_no_csa", {0.3024, 0.3859}},
        {"arag_no_nli", {0.3849, 0.4714}},
        {"arag", {0.43937, 0.5347}}}},
      {"Electronics",
       {{"recency", {0.22482, 0.3035}},
        {"vanilla_rag", {0.23817, 0.321}},
        {"arag_no_nli_no_csa", {0.2724, 0.3559}},
        {"arag_no_nli", {0.296, 0.3878}},
        {"arag", {0.32853, 0.4201}}}},
      {"Home",
       {{"recency", {0.22443, 0.2988}},
        {"vanilla_rag", {0.22901, 0.3117}},
        {"arag_no_nli_no_csa", {0.2494, 0.3308}},
        {"arag_no_nli", {0.2732, 0.3582}},
        {"arag", {0.28863, 0.3834}}}},
  };
}

inline std::vector<arag::PublishedCell> published_improvements() {
  return {{"Clothing", "ndcg@5", "42.12%"},    {"Clothing", "hit@5", "35.54%"},
          {"Electronics", "ndcg@5", "37.94%"}, {"Electronics", "hit@5", "30.87%"},
          {"Home", "ndcg@5", "25.60%"},        {"Home", "hit@5", "22.68%"}};
}

}  // namespace fixtures
