#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "arag/corpus.hpp"
#include "support/fixtures.hpp"

using namespace arag;

namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parse_catalog reads native and Amazon field names", "[corpus]") {
  std::istringstream in(
      R"({"id": "A1", "title": "Wool hat", "description": "warm", "reviews": ["nice"], "category": "Hats"})"
      "\n\n"
      R"({"asin": "B2", "title": "Desk lamp", "description": ["LED", "dimmable"], "main_cat": "Home"})"
      "\n");
  const Catalog c = parse_catalog(in);
  REQUIRE(c.size() == 2);
  CHECK(c.at("A1").reviews == std::vector<std::string>{"nice"});
  CHECK(c.at("B2").category == "Home");
  CHECK(c.at("B2").description.find("LED") != std::string::npos);
  CHECK(c.at("B2").description.find("dimmable") != std::string::npos);
  CHECK(c.items().front().id == "A1");
}

TEST_CASE("parse_catalog reports line numbers", "[corpus][errors]") {
  std::istringstream bad_json("{\"id\": \"A\", \"title\": \"x\"}\n{oops\n");
  CHECK_THAT(error_of([&] { parse_catalog(bad_json, "cat.jsonl"); }),
             Catch::Matchers::ContainsSubstring("cat.jsonl: line 2"));

  std::istringstream dup("{\"id\": \"A\", \"title\": \"x\"}\n{\"id\": \"A\", \"title\": \"y\"}\n");
  const auto msg = error_of([&] { parse_catalog(dup); });
  CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("duplicate item id \"A\""));
  CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("first defined on line 1"));

  std::istringstream no_title("{\"id\": \"A\", \"title\": \"\"}\n");
  CHECK_THAT(error_of([&] { parse_catalog(no_title); }), Catch::Matchers::ContainsSubstring("empty title"));

  std::istringstream not_object("[1, 2]\n");
  CHECK_THAT(error_of([&] { parse_catalog(not_object); }), Catch::Matchers::ContainsSubstring("expected a JSON object"));
}

TEST_CASE("parse_interactions validates fields", "[corpus][errors]") {
  std::istringstream ok(
      R"({"reviewerID": "u", "asin": "A", "unixReviewTime": 100, "overall": 4.0, "reviewText": "good"})"
      "\n");
  const auto log = parse_interactions(ok);
  REQUIRE(log.size() == 1);
  CHECK(log[0].user_id == "u");
  CHECK(log[0].rating == 4.0);
  CHECK(log[0].review_text == "good");

  std::istringstream bad_rating(R"({"user_id": "u", "item_id": "A", "timestamp": 1, "rating": 6})");
  CHECK_THAT(error_of([&] { parse_interactions(bad_rating); }), Catch::Matchers::ContainsSubstring("[1, 5]"));
  std::istringstream bad_ts(R"({"user_id": "u", "item_id": "A", "timestamp": "noon"})");
  CHECK_THAT(error_of([&] { parse_interactions(bad_ts); }), Catch::Matchers::ContainsSubstring("timestamp"));
  std::istringstream negative(R"({"user_id": "u", "item_id": "A", "timestamp": -5})");
  CHECK_THAT(error_of([&] { parse_interactions(negative); }), Catch::Matchers::ContainsSubstring(">= 0"));
}

TEST_CASE("load_catalog names a missing file", "[corpus][errors]") {
  CHECK_THAT(error_of([] { load_catalog("/nonexistent/catalog.jsonl"); }),
             Catch::Matchers::ContainsSubstring("/nonexistent/catalog.jsonl"));
}

TEST_CASE("build_contexts splits the session at the last long gap", "[corpus]") {
  const Catalog catalog = fixtures::make_catalog(fixtures::small_items());
  using fixtures::hit;
  std::vector<Interaction> log = {
      hit("b", "I05", 50), hit("a", "I02", 10'000), hit("a", "I01", 100), hit("a", "I03", 10'600),
      hit("a", "I04", 11'000),
  };
  const auto contexts = build_contexts(log, catalog, 3600);
  REQUIRE(contexts.size() == 2);
  const auto& a = contexts[0];
  CHECK(a.user_id == "a");
  REQUIRE(a.long_term.size() == 1);
  CHECK(a.long_term[0].item_id == "I01");
  REQUIRE(a.session.size() == 3);
  CHECK(a.session[0].item_id == "I02");
  CHECK(a.session[2].item_id == "I04");

  const auto& b = contexts[1];
  CHECK(b.long_term.empty());
  CHECK(b.session.size() == 1);

  // A shorter gap pushes everything before the last jump into long-term.
  const auto tight = build_contexts(log, catalog, 500);
  CHECK(tight[0].session.size() == 2);
}

TEST_CASE("build_contexts orders equal timestamps by item id", "[corpus]") {
  const Catalog catalog = fixtures::make_catalog(fixtures::small_items());
  using fixtures::hit;
  const auto contexts = build_contexts({hit("a", "I09", 5), hit("a", "I02", 5)}, catalog);
  CHECK(contexts[0].session[0].item_id == "I02");
  CHECK(contexts[0].session[1].item_id == "I09");
}

TEST_CASE("build_contexts rejects unknown items and bad gaps", "[corpus][errors]") {
  const Catalog catalog = fixtures::make_catalog(fixtures::small_items());
  using fixtures::hit;
  CHECK_THAT(error_of([&] { build_contexts({hit("a", "ZZ", 1), hit("a", "YY", 2)}, catalog); }),
             Catch::Matchers::ContainsSubstring("unknown item ids: YY ZZ"));
  CHECK_THROWS_AS(build_contexts({}, catalog, 0), UsageError);
}

TEST_CASE("holdout_split removes the last session interaction", "[corpus]") {
  const auto inst = holdout_split(fixtures::small_context());
  CHECK(inst.ground_truth == "I02");
  CHECK(inst.context.session.size() == 1);
  CHECK(inst.context.long_term.size() == 3);

  UserContext only_long;
  only_long.user_id = "x";
  only_long.long_term = {fixtures::hit("x", "I01", 1)};
  CHECK_THROWS_AS(holdout_split(only_long), DataError);
}

TEST_CASE("newest_first walks session then long-term backwards", "[corpus]") {
  const auto ctx = fixtures::small_context();
  std::vector<std::string> ids;
  for (const auto* x : ctx.newest_first()) ids.push_back(x->item_id);
  CHECK(ids == std::vector<std::string>{"I02", "I01", "I05", "I04", "I03"});
}

TEST_CASE("UserContext JSON round trip", "[corpus]") {
  const auto ctx = fixtures::small_context();
  CHECK(context_from_json(to_json(ctx)) == ctx);
}

TEST_CASE("metadata_text is labelled and caps reviews", "[corpus]") {
  Item item{"X", "Lamp", "Bright", {"r1", "r2", "r3", "r4"}, "Home"};
  CHECK(metadata_text(item, 2) == "Title: Lamp\nDescription: Bright\nReview 1: r1\nReview 2: r2\n");
  CHECK(metadata_text(item, 0) == "Title: Lamp\nDescription: Bright\n");
}
