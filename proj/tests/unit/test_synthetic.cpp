#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "arag/heuristic_backend.hpp"
#include "arag/synthetic.hpp"
#include "support/fixtures.hpp"

using namespace arag;
using V = std::vector<std::string>;

TEST_CASE("synthetic catalog has one item per attribute combination", "[synthetic]") {
  SyntheticOptions o;
  o.users = 3;
  const auto data = generate_synthetic(o);
  CHECK(data.items.size() == 1296);
  std::set<std::string> titles;
  for (const auto& item : data.items) titles.insert(item.title);
  CHECK(titles.size() == 1296);
  CHECK(data.items.front().id == "P00000");
  CHECK(data.items.front().title == "jacket crimson wool vintage");
  CHECK(data.interactions.size() == 3 * (12 + 3 + 1));
}

TEST_CASE("synthetic users hold out an unseen intent item at the end of a session", "[synthetic]") {
  SyntheticOptions o;
  o.users = 25;
  const auto s = fixtures::synthetic_setup(o);
  REQUIRE(s.instances.size() == 25);
  for (const auto& inst : s.instances) {
    CHECK(inst.context.long_term.size() == 12);
    CHECK(inst.context.session.size() == 3);
    for (const auto* x : inst.context.newest_first()) CHECK(x->item_id != inst.ground_truth);
  }
}

TEST_CASE("synthetic generation is seeded", "[synthetic]") {
  SyntheticOptions o;
  o.users = 4;
  const auto a = generate_synthetic(o);
  const auto b = generate_synthetic(o);
  CHECK(a.interactions == b.interactions);
  o.seed = 8;
  CHECK(generate_synthetic(o).interactions != a.interactions);
}

TEST_CASE("synthetic options are validated", "[synthetic][errors]") {
  SyntheticOptions o;
  o.dimensions = 9;
  CHECK_THROWS_AS(generate_synthetic(o), UsageError);
  o = {};
  o.values_per_dimension = 1;
  CHECK_THROWS_AS(generate_synthetic(o), UsageError);
  o = {};
  o.shifted_dims = 5;
  CHECK_THROWS_AS(generate_synthetic(o), UsageError);
  o = {};
  o.users = 0;
  CHECK_THROWS_AS(generate_synthetic(o), UsageError);
}

TEST_CASE("write_synthetic output loads back", "[synthetic]") {
  fixtures::TempDir dir("synth");
  SyntheticOptions o;
  o.users = 2;
  const auto data = generate_synthetic(o);
  write_synthetic(data, dir / "c.jsonl", dir / "i.jsonl");
  CHECK(load_catalog(dir / "c.jsonl").size() == data.items.size());
  CHECK(load_interactions(dir / "i.jsonl") == data.interactions);
}

namespace {

ChatRequest user_prompt(std::string agent, std::string text) {
  ChatRequest r;
  r.agent = std::move(agent);
  r.messages = {{"system", "Title: ignored system text"}, {"user", std::move(text)}};
  return r;
}

}  // namespace

TEST_CASE("heuristic prompt parser reads sections", "[heuristic]") {
  const auto p = heuristic::parse(user_prompt("nli",
                                              "Long-term history (older):\n"
                                              "- [id: A] Title: red wool hat | Description: x\n"
                                              "Current session:\n"
                                              "- [id: B] Title: blue wool scarf | Description: y (rated 4/5)\n"
                                              "Candidate item:\n"
                                              "[id: C] (alignment score: 0.75)\n"
                                              "Title: blue cotton scarf\n"
                                              "Description: z\n"
                                              "Does this candidate item align?\n"
                                              "- [id: D] Title: ignored\n"));
  REQUIRE(p.long_term.size() == 1);
  CHECK(p.long_term[0].title == V{"red", "wool", "hat"});
  REQUIRE(p.session.size() == 1);
  CHECK(p.session[0].id == "B");
  REQUIRE(p.candidates.size() == 1);
  CHECK(p.candidates[0].score == 0.75);
  CHECK(p.candidates[0].title == V{"blue", "cotton", "scarf"});
  CHECK_FALSE(p.has_history_section);
}

TEST_CASE("heuristic agents answer in the formats the pipeline parses", "[heuristic]") {
  HeuristicBackend h;
  const std::string history =
      "Long-term history:\n- [id: A] Title: red wool hat\n"
      "Current session:\n- [id: B] Title: blue wool scarf\n- [id: E] Title: blue linen scarf\n";

  const auto uua = h.respond(user_prompt("user_understanding", history));
  CHECK(uua == "User likes: blue, scarf, wool, linen, hat.");

  const auto nli_good = parse_nli_reply(
      h.respond(user_prompt("nli", history + "Candidate item:\n[id: C]\nTitle: blue wool scarf\n")), "C");
  const auto nli_bad = parse_nli_reply(
      h.respond(user_prompt("nli", history + "Candidate item:\n[id: D]\nTitle: green steel kettle\n")), "D");
  REQUIRE(nli_good);
  REQUIRE(nli_bad);
  CHECK(nli_good->score > 0.9);
  CHECK(nli_bad->score == 0.0);

  const auto ranked = h.respond(user_prompt("item_ranker",
                                            "User summary:\nscarf, blue\nContext summary:\nwool\n"
                                            "Candidate items:\n[id: X]\nTitle: green kettle\n\n"
                                            "[id: Y]\nTitle: blue wool scarf\n\n[id: Z]\nTitle: blue scarf\n"
                                            "Rank the candidate items."));
  CHECK(parse_ranking(ranked, {"X", "Y", "Z"}, {"X", "Y", "Z"}) == V{"Y", "Z", "X"});

  const auto baseline = h.respond(user_prompt("item_ranker",
                                              "User history:\n- [id: A] Title: green kettle\n"
                                              "Candidate items:\n[id: X]\nTitle: blue scarf\n\n"
                                              "[id: Y]\nTitle: green kettle\n"));
  CHECK(parse_ranking(baseline, {"X", "Y"}, {"X", "Y"}) == V{"Y", "X"});
  CHECK(h.respond(user_prompt("critic", "x")).empty());
}

TEST_CASE("heuristic context summary favours high alignment scores", "[heuristic]") {
  HeuristicBackend h;
  const auto reply = h.respond(user_prompt("context_summary",
                                           "User summary:\nscarf, blue\n"
                                           "Accepted candidate items:\n"
                                           "[id: A] (alignment score: 0.90)\nTitle: blue silk scarf\n\n"
                                           "[id: B] (alignment score: 0.20)\nTitle: blue steel kettle\n"
                                           "Summarize."));
  CHECK(reply.rfind("Relevant attributes: ", 0) == 0);
  CHECK(reply.find("silk") != std::string::npos);
  CHECK(reply.find("silk") < reply.find("kettle"));
}
