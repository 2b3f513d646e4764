#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "oracles.hpp"
#include "trustlex/corpus.hpp"
#include "trustlex/rng.hpp"

using namespace trustlex;
using Catch::Approx;

namespace {

Instrument three_item_instrument() {
  Instrument inst;
  inst.items = {{"q1", false, true}, {"q2", true, true}, {"q3", false, true}};
  return inst;
}

void write_file(const std::filesystem::path &p, const std::string &content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("reverse_score maps the scale endpoints and midpoint", "[corpus]") {
  CHECK(reverse_score(1) == 5);
  CHECK(reverse_score(3) == 3);
  CHECK(reverse_score(4) == 2);
  CHECK_THROWS_AS(reverse_score(0), DataError);
  CHECK_THROWS_AS(reverse_score(6), DataError);
}

TEST_CASE("reverse_score is an involution on the whole scale", "[corpus]") {
  for (int v = 1; v <= 5; ++v) CHECK(reverse_score(reverse_score(v)) == v);
}

TEST_CASE("score_questionnaire averages with reverse scoring", "[corpus]") {
  auto inst = three_item_instrument();
  std::vector<QuestionnaireResponse> rs = {
      {"u", "q1", 3, false, true}, {"u", "q2", 3, true, true}, {"u", "q3", 3, false, true}};
  CHECK(score_questionnaire(rs, inst, Version::q3) == Approx(3.0));

  rs = {{"u", "q1", 5, false, true}, {"u", "q2", 2, true, true}, {"u", "q3", 3, false, true}};
  CHECK(score_questionnaire(rs, inst, Version::q3) == Approx(4.0));  // (5 + 4 + 3) / 3
}

TEST_CASE("score_questionnaire rejects missing and duplicate items", "[corpus]") {
  auto inst = three_item_instrument();
  std::vector<QuestionnaireResponse> missing = {{"u", "q1", 5, false, true},
                                                {"u", "q3", 3, false, true}};
  CHECK_THROWS_WITH(score_questionnaire(missing, inst, Version::q3),
                    Catch::Matchers::ContainsSubstring("q2"));

  std::vector<QuestionnaireResponse> dup = {{"u", "q1", 5, false, true},
                                            {"u", "q1", 4, false, true},
                                            {"u", "q2", 3, true, true},
                                            {"u", "q3", 3, false, true}};
  CHECK_THROWS_WITH(score_questionnaire(dup, inst, Version::q3),
                    Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("score_questionnaire is order invariant and bounded", "[corpus]") {
  auto inst = three_item_instrument();
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QuestionnaireResponse> rs;
    for (const auto &item : inst.items)
      rs.push_back({"u", item.item_id, 1 + static_cast<int>(rng.below(5)), item.reverse_scored,
                    item.in_3q});
    double base = score_questionnaire(rs, inst, Version::q3);
    CHECK(base >= 1.0);
    CHECK(base <= 5.0);
    rng.shuffle(rs);
    CHECK(score_questionnaire(rs, inst, Version::q3) == base);
  }
}

TEST_CASE("load_corpus ingests messages and responses", "[corpus]") {
  oracle::TempDir dir("corpus");
  write_file(dir.path() / "messages.jsonl",
             R"({"user_id":"u1","message_id":"m1","text":"hello there"})"
             "\n"
             R"({"user_id":"u1","message_id":"m2","text":"more text"})"
             "\n"
             R"({"user_id":"u1","message_id":"m3","text":"third one"})"
             "\n"
             R"({"user_id":"u2","message_id":"m1","text":"i trust you"})"
             "\n"
             R"({"user_id":"u2","message_id":"m2","text":"another"})"
             "\n"
             R"({"user_id":"u2","message_id":"m3","text":"and more"})"
             "\n");
  std::string responses =
      "user_id,item_id,value,reverse_scored,in_3q\n"
      "u1,q1,5,0,1\nu1,q2,2,1,1\nu1,q3,3,0,1\n"
      "u2,q1,1,0,1\nu2,q2,5,1,1\nu2,q3,1,0,1\n";
  // one long-version participant widens the instrument to ten items
  for (int i = 4; i <= 10; ++i)
    responses += "u3,q" + std::to_string(i) + ",4,0,0\n";
  responses += "u3,q1,4,0,1\nu3,q2,3,1,1\nu3,q3,4,0,1\n";
  write_file(dir.path() / "responses.csv", responses);
  Corpus corpus = load_corpus((dir.path() / "messages.jsonl").string(),
                              (dir.path() / "responses.csv").string());
  REQUIRE(corpus.users.size() == 3);
  CHECK(corpus.users[0].user_id == "u1");
  CHECK(corpus.users[0].messages.size() == 3);
  REQUIRE(corpus.users[0].trust_3q.has_value());
  CHECK(*corpus.users[0].trust_3q == Approx(4.0));
  CHECK(*corpus.users[1].trust_3q == Approx(1.0));  // (1 + 1 + 1) / 3
  CHECK_FALSE(corpus.users[0].trust_10q.has_value());  // covers only the 3q subset
  CHECK_FALSE(corpus.users[0].word_count.has_value());
  REQUIRE(corpus.users[2].trust_10q.has_value());
  CHECK(*corpus.users[2].trust_10q == Approx((4 + 3 + 4 + 7 * 4) / 10.0));
  CHECK(*corpus.users[2].trust_3q == Approx((4 + 3 + 4) / 3.0));
}

TEST_CASE("load_corpus with empty responses leaves scores unset", "[corpus]") {
  oracle::TempDir dir("corpus_empty");
  write_file(dir.path() / "messages.jsonl",
             R"({"user_id":"u1","message_id":"m1","text":"hi"})"
             "\n");
  write_file(dir.path() / "responses.csv", "user_id,item_id,value,reverse_scored,in_3q\n");
  Corpus corpus = load_corpus((dir.path() / "messages.jsonl").string(),
                              (dir.path() / "responses.csv").string());
  REQUIRE(corpus.users.size() == 1);
  CHECK_FALSE(corpus.users[0].trust_3q.has_value());
  CHECK_FALSE(corpus.users[0].trust_10q.has_value());
}

TEST_CASE("load_corpus names file, line and field on bad input", "[corpus]") {
  oracle::TempDir dir("corpus_bad");
  write_file(dir.path() / "messages.jsonl",
             R"({"user_id":"u1","message_id":"m1","text":"hi"})"
             "\n");
  write_file(dir.path() / "responses.csv",
             "user_id,item_id,value,reverse_scored,in_3q\n"
             "u1,q1,6,0,1\n");
  try {
    load_corpus((dir.path() / "messages.jsonl").string(), (dir.path() / "responses.csv").string());
    FAIL("expected DataError");
  } catch (const DataError &e) {
    std::string msg = e.what();
    CHECK(msg.find("responses.csv:2") != std::string::npos);
    CHECK(msg.find("out of range [1,5]") != std::string::npos);
  }
}

TEST_CASE("load_corpus rejects duplicate message ids and malformed JSON", "[corpus]") {
  oracle::TempDir dir("corpus_dup");
  write_file(dir.path() / "responses.csv", "user_id,item_id,value,reverse_scored,in_3q\n");

  write_file(dir.path() / "messages.jsonl",
             R"({"user_id":"u1","message_id":"m1","text":"a"})"
             "\n"
             R"({"user_id":"u1","message_id":"m1","text":"b"})"
             "\n");
  CHECK_THROWS_WITH(load_corpus((dir.path() / "messages.jsonl").string(),
                                (dir.path() / "responses.csv").string()),
                    Catch::Matchers::ContainsSubstring("duplicate (user_id, message_id)"));

  write_file(dir.path() / "messages.jsonl", "not json at all\n");
  try {
    load_corpus((dir.path() / "messages.jsonl").string(), (dir.path() / "responses.csv").string());
    FAIL("expected DataError");
  } catch (const DataError &e) {
    CHECK(std::string(e.what()).find("messages.jsonl:1") != std::string::npos);
  }
}

TEST_CASE("load_corpus keeps users that appear in only one file", "[corpus]") {
  oracle::TempDir dir("corpus_oneside");
  write_file(dir.path() / "messages.jsonl",
             R"({"user_id":"writer","message_id":"m1","text":"words"})"
             "\n");
  write_file(dir.path() / "responses.csv",
             "user_id,item_id,value,reverse_scored,in_3q\n"
             "silent,q1,3,0,1\nsilent,q2,3,1,1\nsilent,q3,3,0,1\n");
  Corpus corpus = load_corpus((dir.path() / "messages.jsonl").string(),
                              (dir.path() / "responses.csv").string());
  REQUIRE(corpus.users.size() == 2);
  CHECK(corpus.users[0].user_id == "silent");
  CHECK(corpus.users[0].messages.empty());
  CHECK(corpus.users[0].trust_3q.has_value());
  CHECK(corpus.users[1].user_id == "writer");
  CHECK_FALSE(corpus.users[1].trust_3q.has_value());
}

TEST_CASE("scored CSV has empty cells for missing values", "[corpus]") {
  Corpus corpus;
  UserRecord a;
  a.user_id = "a";
  a.trust_3q = 3.5;
  a.word_count = 12;
  UserRecord b;
  b.user_id = "b";
  corpus.users = {a, b};
  std::ostringstream out;
  write_scored_csv(corpus, out);
  CHECK(out.str() == "user_id,trust_3q,trust_10q,word_count\na,3.5,,12\nb,,,\n");
}
