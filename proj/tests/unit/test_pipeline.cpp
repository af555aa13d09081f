#include <catch2/catch_amalgamated.hpp>

#include <mutex>
#include <set>

#include "arag/pipeline.hpp"
#include "support/fixtures.hpp"

using namespace arag;
using V = std::vector<std::string>;

namespace {

struct PipelineHarness {
  Catalog catalog = fixtures::make_catalog(fixtures::small_items());
  UserContext ctx = fixtures::small_context();
  HashedEmbedder embedder{64};
  PromptSet prompts;
  MockBackend backend{fixtures::scripted_reply};
  std::vector<Item> pool = fixtures::pick(catalog, {"I06", "I07", "I08", "I09", "I10", "I11"});
  PipelineConfig cfg;

  Runtime runtime() { return Runtime{catalog, embedder, prompts, backend, nullptr, {}, fixtures::counting_clock()}; }

  PipelineOutput run(Variant v) {
    cfg.variant = v;
    return run_variant(ctx, pool, cfg, runtime());
  }
};

std::multiset<std::pair<int, std::string>> stage_roles(const Blackboard& board) {
  std::multiset<std::pair<int, std::string>> out;
  for (const auto& m : board.read()) out.insert({m.stage, std::string(to_string(m.role))});
  return out;
}

bool is_permutation_of(V a, V b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b && std::adjacent_find(a.begin(), a.end()) == a.end();
}

}  // namespace

TEST_CASE("variant names round trip", "[pipeline]") {
  for (Variant v : kAllVariants) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("arag_plus"), UsageError);
}

TEST_CASE("full pipeline posts p+3 messages in protocol order", "[pipeline]") {
  PipelineHarness h;
  const auto out = h.run(Variant::arag);
  const auto msgs = out.board.read();
  REQUIRE(msgs.size() == h.pool.size() + 3);
  CHECK(msgs.front().id == "uua");
  CHECK(msgs[msgs.size() - 2].id == "csa");
  CHECK(msgs.back().id == "ira");
  for (std::size_t i = 1; i + 2 < msgs.size(); ++i) {
    CHECK(msgs[i].role == AgentRole::nli);
    CHECK(msgs[i].stage == 1);
  }
  CHECK(msgs[msgs.size() - 2].stage == 2);
  CHECK(msgs.back().stage == 3);
  CHECK(out.usage.size() == h.pool.size() + 3);

  V pool_ids;
  for (const auto& item : h.pool) pool_ids.push_back(item.id);
  CHECK(is_permutation_of(out.ranking.ids, pool_ids));
  // The scripted ranker reverses the prompt order, which is pool order.
  CHECK(out.ranking.ids == V(pool_ids.rbegin(), pool_ids.rend()));
  CHECK(ranking_from_trace(out.trace) == out.ranking.ids);
}

TEST_CASE("ablations drop exactly their agents", "[pipeline]") {
  PipelineHarness h;
  using S = std::multiset<std::pair<int, std::string>>;
  CHECK(stage_roles(h.run(Variant::arag_no_nli).board) ==
        S{{1, "user_understanding"}, {2, "context_summary"}, {3, "item_ranker"}});
  CHECK(stage_roles(h.run(Variant::arag_no_nli_no_csa).board) == S{{1, "user_understanding"}, {3, "item_ranker"}});
  CHECK(stage_roles(h.run(Variant::vanilla_rag).board) == S{{3, "item_ranker"}});
  CHECK(stage_roles(h.run(Variant::recency).board) == S{{3, "item_ranker"}});
  CHECK(h.run(Variant::recency).usage.size() == 1);
}

TEST_CASE("without NLI the context summary covers the pool in retrieval order", "[pipeline]") {
  PipelineHarness h;
  const auto out = h.run(Variant::arag_no_nli);
  const auto csa = nlohmann::json::parse(out.board.read(AgentRole::context_summary).at(0).content);
  CHECK(csa.at("source_item_ids").get<V>() == out.retrieval_order);
}

TEST_CASE("theta selects the items summarized by CSA", "[pipeline]") {
  PipelineHarness h;
  h.backend.set_responder([](const ChatRequest& r) -> std::string {
    if (r.agent == "nli") {
      const auto& text = r.messages.back().content;
      const bool wool = text.find("Candidate item:\n[id: I08]") != std::string::npos;
      return wool ? R"({"score": 0.95})" : R"({"score": 0.2})";
    }
    return fixtures::scripted_reply(r);
  });
  h.cfg.m_min = 1;
  auto out = h.run(Variant::arag);
  auto csa = nlohmann::json::parse(out.board.read(AgentRole::context_summary).at(0).content);
  CHECK(csa.at("source_item_ids").get<V>() == V{"I08"});

  // Nothing clears a high threshold: fall back to the top m_min judgements.
  h.cfg.theta = 0.99;
  h.cfg.m_min = 2;
  out = h.run(Variant::arag);
  csa = nlohmann::json::parse(out.board.read(AgentRole::context_summary).at(0).content);
  CHECK(csa.at("source_item_ids").get<V>() == V{"I08", "I06"});
}

TEST_CASE("step-1 scheduling does not change the canonical board", "[pipeline][determinism]") {
  PipelineHarness h;
  h.cfg.variant = Variant::arag;
  const auto reference = run_variant(h.ctx, h.pool, h.cfg, h.runtime());

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Runtime rt = h.runtime();
    rt.runner = [seed](std::vector<std::function<void()>>& tasks) {
      std::vector<std::size_t> order(tasks.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      SeededRng(seed).shuffle(order);
      for (auto i : order) tasks[i]();
    };
    const auto out = run_variant(h.ctx, h.pool, h.cfg, rt);
    CHECK(timeless_view(out.board) == timeless_view(reference.board));
    CHECK(out.ranking.ids == reference.ranking.ids);
  }

  h.cfg.concurrency_cap = 8;
  const auto threaded = run_variant(h.ctx, h.pool, h.cfg, h.runtime());
  CHECK(timeless_view(threaded.board) == timeless_view(reference.board));
}

TEST_CASE("vanilla RAG and recency choose different history", "[pipeline]") {
  PipelineHarness h;
  h.cfg.agent.max_history_items = 2;
  std::mutex mu;
  std::string last_prompt;
  h.backend.set_responder([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    last_prompt = r.messages.back().content;
    return fixtures::scripted_reply(r);
  });
  // Pool of knitwear: the wool items in the history are the most similar.
  h.pool = fixtures::pick(h.catalog, {"I08", "I07", "I10"});
  h.ctx.session.push_back(fixtures::hit("u1", "I12", 500700));

  h.run(Variant::recency);
  auto history = last_prompt.substr(0, last_prompt.find("Candidate"));
  CHECK(history.find("[id: I12]") != std::string::npos);
  CHECK(history.find("[id: I02]") != std::string::npos);
  CHECK(history.find("[id: I01]") == std::string::npos);

  const auto recency_history = history;
  h.run(Variant::vanilla_rag);
  history = last_prompt.substr(0, last_prompt.find("Candidate"));
  CHECK(history.find("[id: I01]") != std::string::npos);
  CHECK(history != recency_history);
}

TEST_CASE("pipeline input errors", "[pipeline][errors]") {
  PipelineHarness h;
  h.pool.push_back(h.pool.front());
  CHECK_THROWS_AS(h.run(Variant::arag), DataError);
  h.pool.clear();
  CHECK_THROWS_AS(h.run(Variant::arag), UsageError);

  PipelineHarness empty_user;
  empty_user.ctx = UserContext{"ghost", {}, {}};
  CHECK_THROWS_AS(empty_user.run(Variant::recency), DataError);

  PipelineHarness bad_cfg;
  bad_cfg.cfg.theta = 2.0;
  CHECK_THROWS_AS(bad_cfg.run(Variant::arag), UsageError);
}

TEST_CASE("a failing NLI call fails the whole run", "[pipeline][errors]") {
  PipelineHarness h;
  h.backend.set_responder([](const ChatRequest& r) -> std::string {
    if (r.agent == "nli" && r.messages.back().content.find("[id: I09]") != std::string::npos) {
      throw BackendError("nli", "HTTP 500");
    }
    return fixtures::scripted_reply(r);
  });
  CHECK_THROWS_AS(h.run(Variant::arag), BackendError);
  CHECK_NOTHROW(h.run(Variant::arag_no_nli));
}

TEST_CASE("run_bounded runs every task and rethrows the first failure", "[pipeline]") {
  std::atomic<int> ran{0};
  std::vector<std::function<void()>> tasks;
  for (int i = 0; i < 20; ++i) {
    tasks.emplace_back([&ran, i] {
      ++ran;
      if (i == 5 || i == 11) throw DataError("task " + std::to_string(i));
    });
  }
  try {
    run_bounded(tasks, 4);
    FAIL("expected an exception");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "task 5");
  }
  CHECK(ran == 20);
}

TEST_CASE("ranking_from_trace requires one ranker message", "[pipeline][trace]") {
  PipelineHarness h;
  const auto out = h.run(Variant::arag_no_nli_no_csa);
  const auto uua_only = out.trace.substr(0, out.trace.find('\n') + 1);
  CHECK_THROWS_AS(ranking_from_trace(uua_only), DataError);
}
