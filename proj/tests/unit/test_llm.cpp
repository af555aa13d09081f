#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "arag/llm.hpp"
#include "support/fixtures.hpp"

using namespace arag;

namespace {

ChatRequest request(const std::string& user, const std::string& agent = "nli") {
  ChatRequest r;
  r.messages = {{"system", "You judge items."}, {"user", user}};
  r.agent = agent;
  return r;
}

class CountingBackend final : public ChatBackend {
 public:
  ChatResponse complete(const ChatRequest& r) override {
    ++calls;
    return {"echo:" + r.messages.back().content, 11, 3};
  }
  std::string kind() const override { return "counting"; }
  int calls = 0;
};

}  // namespace

TEST_CASE("request_digest covers roles and content only", "[llm]") {
  auto a = request("hello");
  auto b = request("hello");
  b.max_tokens = 9;
  b.temperature = 0.7;
  b.model_tag = "other";
  b.agent = "item_ranker";
  CHECK(request_digest(a) == request_digest(b));
  CHECK(request_digest(a).size() == 64);
  CHECK(request_digest(a) != request_digest(request("hello!")));

  auto swapped = a;
  swapped.messages[0].role = "user";
  CHECK(request_digest(a) != request_digest(swapped));
  // Boundaries between messages matter.
  ChatRequest joined;
  joined.messages = {{"user", "ab"}};
  ChatRequest split;
  split.messages = {{"user", "a"}, {"user", "b"}};
  CHECK(request_digest(joined) != request_digest(split));
}

TEST_CASE("MockBackend lookup order", "[llm][mock]") {
  MockBackend mock([](const ChatRequest&) { return std::string("from responder"); });
  mock.script(request("scripted"), "from script");
  CHECK(mock.complete(request("scripted")).text == "from script");
  CHECK(mock.complete(request("other")).text == "from responder");

  MockBackend plain;
  plain.set_default("fallback");
  CHECK(plain.complete(request("x")).text == "fallback");
  CHECK(plain.calls() == 1);

  mock.set_strict(true);
  CHECK(mock.complete(request("scripted")).text == "from script");
  try {
    mock.complete(request("other", "context_summary"));
    FAIL("strict mock answered an unscripted request");
  } catch (const BackendError& e) {
    CHECK(e.agent() == "context_summary");
    CHECK(e.exit_code() == 3);
  }
}

TEST_CASE("MockBackend reports estimated usage", "[llm][mock]") {
  MockBackend mock;
  mock.set_default("two words");
  const auto r = mock.complete(request("one two three"));
  CHECK(r.completion_tokens == 2);
  CHECK(r.prompt_tokens == 3 + 3);
}

TEST_CASE("Cassette persists each digest once", "[llm][cassette]") {
  fixtures::TempDir dir("cassette");
  const auto path = dir / "c.jsonl";
  {
    Cassette c(path);
    CHECK(c.insert("d1", {"first", 1, 2}).text == "first");
    CHECK(c.insert("d1", {"second", 9, 9}).text == "first");
    c.insert("d2", {"other", 0, 0});
    CHECK(c.size() == 2);
  }
  const auto text = fixtures::slurp(path);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  CHECK(first.at("digest") == "d1");
  CHECK(first.at("response_text") == "first");
  CHECK(first.at("prompt_tokens") == 1);
  CHECK(first.at("completion_tokens") == 2);

  const auto loaded = Cassette::read(path);
  CHECK(loaded.find("d1")->text == "first");
  CHECK_FALSE(loaded.find("missing"));

  fixtures::spit(dir / "bad.jsonl", "{\"digest\": \"x\"}\n");
  CHECK_THROWS_AS(Cassette::read(dir / "bad.jsonl"), DataError);
}

TEST_CASE("record then replay answers identically without the inner backend", "[llm][cassette]") {
  fixtures::TempDir dir("record");
  const auto path = dir / "run.jsonl";
  CountingBackend inner;
  std::vector<ChatResponse> recorded;
  {
    RecordingBackend rec(inner, path);
    recorded.push_back(rec.complete(request("a")));
    recorded.push_back(rec.complete(request("b")));
    recorded.push_back(rec.complete(request("a")));
    CHECK(inner.calls == 2);
  }
  ReplayBackend replay(path);
  CHECK(replay.complete(request("a")) == recorded[0]);
  CHECK(replay.complete(request("b")) == recorded[1]);
  CHECK(recorded[2] == recorded[0]);
  CHECK_THROWS_AS(replay.complete(request("c")), BackendError);
}

TEST_CASE("MockBackend loads a digest script", "[llm][mock]") {
  fixtures::TempDir dir("script");
  const auto req = request("scripted by file");
  fixtures::spit(dir / "script.jsonl",
                 detail::dump({{"digest", request_digest(req)}, {"response_text", "loaded"}}) + "\n");
  MockBackend mock;
  mock.set_strict(true);
  mock.load_script(dir / "script.jsonl");
  CHECK(mock.complete(req).text == "loaded");
}

TEST_CASE("Cassette inserts are safe under concurrency", "[llm][cassette]") {
  fixtures::TempDir dir("concurrent");
  Cassette c(dir / "c.jsonl");
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&c, t] {
      for (int i = 0; i < 50; ++i) c.insert("d" + std::to_string((t * 50 + i) % 100), {"x", 0, 0});
    });
  }
  for (auto& t : threads) t.join();
  CHECK(c.size() == 100);
  CHECK(Cassette::read(dir / "c.jsonl").size() == 100);
}
