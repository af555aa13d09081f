#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "arag/blackboard.hpp"
#include "support/fixtures.hpp"

using namespace arag;

namespace {

Message msg(std::string id, AgentRole role, std::string content, std::optional<double> score = std::nullopt) {
  return {std::move(id), role, std::move(content), score, 0, protocol_stage(role)};
}

std::string error_of(std::string_view trace) {
  try {
    replay(trace);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("read returns the canonical order regardless of arrival", "[blackboard]") {
  Blackboard board(fixtures::counting_clock());
  board.post(msg("ira", AgentRole::item_ranker, "r"));
  board.post(msg("nli:b", AgentRole::nli, "{}", 0.2));
  board.post(msg("csa", AgentRole::context_summary, "c"));
  board.post(msg("nli:a", AgentRole::nli, "{}", 0.9));
  board.post(msg("uua", AgentRole::user_understanding, "u"));

  std::vector<std::string> ids;
  for (const auto& m : board.read()) ids.push_back(m.id);
  CHECK(ids == std::vector<std::string>{"uua", "nli:a", "nli:b", "csa", "ira"});
  CHECK(board.arrival_log().front().id == "ira");
  CHECK(board.read(AgentRole::nli).size() == 2);
  CHECK(board.size() == 5);
}

TEST_CASE("post assigns ids and timestamps", "[blackboard]") {
  Blackboard board([] { return std::int64_t{1234}; });
  const auto id1 = board.post(msg("", AgentRole::user_understanding, "x"));
  const auto id2 = board.post(msg("", AgentRole::user_understanding, "y"));
  CHECK(id1 == "m000001");
  CHECK(id2 == "m000002");
  CHECK(board.read().front().timestamp == 1234);

  Message stamped = msg("s", AgentRole::context_summary, "z");
  stamped.timestamp = 99;
  board.post(stamped);
  CHECK(board.read(AgentRole::context_summary).front().timestamp == 99);
}

TEST_CASE("post validates messages", "[blackboard][errors]") {
  Blackboard board;
  board.post(msg("a", AgentRole::user_understanding, "x"));
  CHECK_THROWS_AS(board.post(msg("a", AgentRole::user_understanding, "again")), DataError);
  CHECK_THROWS_AS(board.post(msg("n", AgentRole::nli, "no score")), DataError);
  CHECK_THROWS_AS(board.post(msg("n", AgentRole::nli, "inf", INFINITY)), DataError);
  Message bad = msg("r", AgentRole::nli, "x", 0.5);
  bad.role = static_cast<AgentRole>(7);
  CHECK_THROWS_AS(board.post(bad), DataError);
}

TEST_CASE("concurrent posts keep every message", "[blackboard]") {
  Blackboard board(fixtures::counting_clock());
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&board, t] {
      for (int i = 0; i < 100; ++i) {
        board.post(msg("nli:" + std::to_string(t * 100 + i), AgentRole::nli, "{}", 0.5));
      }
    });
  }
  for (auto& t : threads) t.join();
  const auto all = board.read();
  CHECK(all.size() == 800);
  CHECK(std::is_sorted(all.begin(), all.end(), canonical_less));
}

TEST_CASE("serialize then replay is the identity", "[blackboard][trace]") {
  Blackboard board(fixtures::counting_clock());
  board.post(msg("uua", AgentRole::user_understanding, "Likes \"wool\"\nand navy"));
  board.post(msg("nli:I01", AgentRole::nli, R"({"item_id":"I01","rationale":"fits"})", 0.75));
  board.post(msg("csa", AgentRole::context_summary, "ctx"));
  board.post(msg("ira", AgentRole::item_ranker, "{}"));
  const auto trace = serialize(board);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 4);

  const auto first = nlohmann::json::parse(trace.substr(0, trace.find('\n')));
  CHECK(first.size() == 6);
  CHECK(first.at("score").is_null());

  const auto again = replay(trace);
  CHECK(again.read() == board.read());
  CHECK(serialize(again) == trace);
}

TEST_CASE("replay reports the offending line and byte offset", "[blackboard][trace][errors]") {
  Blackboard board(fixtures::counting_clock());
  board.post(msg("uua", AgentRole::user_understanding, "u"));
  const std::string good = serialize(board);
  const std::string offset = "byte offset " + std::to_string(good.size());

  CHECK_THAT(error_of(good + "{not json}\n"), Catch::Matchers::ContainsSubstring("trace line 2"));
  CHECK_THAT(error_of(good + "{not json}\n"), Catch::Matchers::ContainsSubstring(offset));

  auto j = nlohmann::json::parse(good);
  j["stage"] = 3;
  CHECK_THAT(error_of(j.dump() + "\n"), Catch::Matchers::ContainsSubstring("stage 3 is invalid"));

  j = nlohmann::json::parse(good);
  j["role"] = "critic";
  CHECK_THAT(error_of(j.dump() + "\n"), Catch::Matchers::ContainsSubstring("unknown role"));

  j = nlohmann::json::parse(good);
  j["extra"] = 1;
  CHECK_THAT(error_of(j.dump() + "\n"), Catch::Matchers::ContainsSubstring("6 fields"));

  CHECK_THAT(error_of(good + good), Catch::Matchers::ContainsSubstring("duplicate message id"));
  CHECK_THAT(error_of(good + "\n"), Catch::Matchers::ContainsSubstring("empty line"));

  // A missing final newline is accepted.
  CHECK(replay(good.substr(0, good.size() - 1)).size() == 1);
  CHECK(replay("").size() == 0);
}

TEST_CASE("timeless_view ignores clocks", "[blackboard]") {
  Blackboard a(fixtures::counting_clock());
  Blackboard b([] { return std::int64_t{5}; });
  a.post(msg("uua", AgentRole::user_understanding, "u"));
  b.post(msg("uua", AgentRole::user_understanding, "u"));
  CHECK(a.read() != b.read());
  CHECK(timeless_view(a) == timeless_view(b));
}
