#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

using namespace spanforge;
using testutil::corpus_from_lines;

namespace {

std::string page_line(const std::string& id, const std::string& title,
                      const std::string& sentence_json,
                      const std::string& tables_json = "[]") {
  return std::string("{\"id\":\"") + id + "\",\"title\":\"" + title +
         "\",\"aliases\":[\"" + title + "\"],\"paragraphs\":[[" +
         sentence_json + "]],\"tables\":" + tables_json + "}\n";
}

}  // namespace

TEST_CASE("parse_corpus validates records") {
  SUBCASE("duplicate page id") {
    std::string two = page_line("p1", "One", R"({"text":"x.","links":[]})") +
                      page_line("p1", "One", R"({"text":"y.","links":[]})");
    std::istringstream is(two);
    CHECK_THROWS_AS(parse_corpus(is), DuplicatePageId);
  }
  SUBCASE("offset out of range") {
    std::string bad = page_line(
        "p1", "One",
        R"({"text":"abc","links":[{"start":1,"end":9,"target":"p2"}]})");
    std::istringstream is(bad);
    CHECK_THROWS_AS(parse_corpus(is), OffsetOutOfRange);
  }
  SUBCASE("offset splitting a UTF-8 character") {
    // "é" is two bytes (0xC3 0xA9); end=2 splits it
    std::string bad = page_line(
        "p1", "One",
        "{\"text\":\"éx\",\"links\":[{\"start\":0,\"end\":1,\"target\":\"p2\"}]}");
    std::istringstream is(bad);
    CHECK_THROWS_AS(parse_corpus(is), OffsetOutOfRange);
  }
  SUBCASE("ragged table") {
    std::string bad = page_line(
        "p1", "One", R"({"text":"x.","links":[]})",
        R"([{"caption":"t","rows":[[{"text":"a","links":[]},{"text":"b","links":[]}],[{"text":"c","links":[]}]]}])");
    std::istringstream is(bad);
    CHECK_THROWS_AS(parse_corpus(is), RaggedTable);
  }
  SUBCASE("table too large") {
    std::string rows = "[";
    for (int r = 0; r < 51; ++r) {
      if (r) rows += ",";
      rows += "[";
      for (int c = 0; c < 10; ++c) {
        if (c) rows += ",";
        rows += R"({"text":"x","links":[]})";
      }
      rows += "]";
    }
    rows += "]";
    std::string bad = page_line("p1", "One", R"({"text":"x.","links":[]})",
                                R"([{"caption":"t","rows":)" + rows + "}]");
    std::istringstream is(bad);
    CHECK_THROWS_AS(parse_corpus(is), TableTooLarge);
  }
  SUBCASE("malformed json and missing fields") {
    std::istringstream is1("{not json\n");
    CHECK_THROWS_AS(parse_corpus(is1), MalformedRecord);
    std::istringstream is2("{\"title\":\"no id\"}\n");
    CHECK_THROWS_AS(parse_corpus(is2), MalformedRecord);
  }
  SUBCASE("title is prepended to aliases when absent") {
    std::istringstream is(
        R"({"id":"p1","title":"One","aliases":["Uno"],"paragraphs":[],"tables":[]})"
        "\n");
    CorpusStore s = parse_corpus(is);
    CHECK(s.pages.at("p1").aliases ==
          std::vector<std::string>{"One", "Uno"});
  }
}

TEST_CASE("hyperlink mentions, outlinks and inlinks") {
  CorpusStore s = corpus_from_lines(
      page_line("p1", "One",
                R"({"text":"see Two here","links":[{"start":4,"end":7,"target":"p2"}]})") +
      page_line("p2", "Two", R"({"text":"plain.","links":[]})"));
  CHECK(s.links_to("p1", "p2"));
  CHECK(!s.links_to("p2", "p1"));
  CHECK(s.inlinks.at("p2").count("p1") == 1);
  const Sentence* sent = s.find_sentence({"p1", 0, 0});
  REQUIRE(sent != nullptr);
  REQUIRE(!sent->mentions.empty());
  CHECK(sent->mentions[0].entity.canon == "p2");
  CHECK(sent->mentions[0].source == MentionSource::Hyperlink);
}

TEST_CASE("self mentions: longest alias first, no overlap, case sensitive") {
  Page page;
  page.id = "p_aa";
  page.title = "Alice Aaronson";
  page.aliases = {"Alice Aaronson", "Alice", "Aaronson"};
  page.topic_entity = EntityId::page("p_aa");
  Sentence s;
  s.text = "Alice Aaronson met alice and Aaronson.";
  auto ms = detect_self_mentions(s, page);
  REQUIRE(ms.size() == 2);
  // full name wins over the contained "Alice"/"Aaronson"; lowercase "alice"
  // is not matched
  CHECK(ms[0].char_start == 0);
  CHECK(ms[0].char_end == 14);
  CHECK(s.text.substr(ms[1].char_start, ms[1].char_end - ms[1].char_start) ==
        "Aaronson");
  for (auto& m : ms) {
    CHECK(m.entity.canon == "p_aa");
    CHECK(m.source == MentionSource::SelfMention);
  }
}

TEST_CASE("self mentions never overlap existing hyperlinks") {
  Page page;
  page.id = "p_aa";
  page.title = "Alice";
  page.aliases = {"Alice"};
  page.topic_entity = EntityId::page("p_aa");
  Sentence s;
  s.text = "Alice said hi";
  s.mentions.push_back(
      {EntityId::page("other"), 0, 5, MentionSource::Hyperlink});
  CHECK(detect_self_mentions(s, page).empty());
}

TEST_CASE("value detector") {
  auto values = [](const std::string& text) {
    Sentence s;
    s.text = text;
    std::vector<std::pair<std::string, std::string>> out;
    for (const Mention& m : detect_value_mentions(s))
      out.push_back({m.entity.canon,
                     text.substr(m.char_start, m.char_end - m.char_start)});
    return out;
  };

  SUBCASE("years 1000..2999 are temporal") {
    auto v = values("born in 1984 here");
    REQUIRE(v.size() == 1);
    CHECK(v[0].first == "T:1984");
    CHECK(v[0].second == "1984");
    CHECK(values("in 2999 x")[0].first == "T:2999");
    // outside the year range: plain numbers
    CHECK(values("in 0999 x")[0].first == "N:0999");
    CHECK(values("in 3021 x")[0].first == "N:3021");
  }
  SUBCASE("ISO dates") {
    auto v = values("on 2001-01-05 it rained");
    REQUIRE(v.size() == 1);
    CHECK(v[0].first == "T:2001-01-05");
    CHECK(v[0].second == "2001-01-05");
  }
  SUBCASE("numbers with thousands separators are normalized") {
    auto v = values("sold 1,234,567 units");
    REQUIRE(v.size() == 1);
    CHECK(v[0].first == "N:1234567");
    CHECK(v[0].second == "1,234,567");
  }
  SUBCASE("decimals") {
    auto v = values("rated 3.5 stars");
    REQUIRE(v.size() == 1);
    CHECK(v[0].first == "N:3.5");
  }
  SUBCASE("digits glued to words are skipped") {
    CHECK(values("the 4th of July").empty());
    CHECK(values("model X2000 shipped").empty());
  }
  SUBCASE("existing mentions are not overlapped") {
    Sentence s;
    s.text = "in 1984 again";
    s.mentions.push_back(
        {EntityId::page("p_1984"), 3, 7, MentionSource::Hyperlink});
    CHECK(detect_value_mentions(s).empty());
  }
}

TEST_CASE("mention insertion resolves overlaps by source priority") {
  std::vector<Mention> ms;
  detail::insert_mention(
      ms, {EntityId::temporal("1984"), 0, 4, MentionSource::ValueDetector});
  // higher priority evicts
  detail::insert_mention(
      ms, {EntityId::page("p"), 2, 6, MentionSource::Hyperlink});
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].source == MentionSource::Hyperlink);
  // lower priority loses against existing
  detail::insert_mention(
      ms, {EntityId::temporal("1984"), 3, 5, MentionSource::ValueDetector});
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].source == MentionSource::Hyperlink);
  // non-overlapping coexists, sorted by start
  detail::insert_mention(
      ms, {EntityId::temporal("1999"), 10, 14, MentionSource::ValueDetector});
  REQUIRE(ms.size() == 2);
  CHECK(ms[0].char_start < ms[1].char_start);
}

TEST_CASE("cell linking: covering mention lends its entity, else unique cell") {
  std::string corpus =
      page_line("p_team", "Team",
                R"({"text":"Team signed Alice in 1984.","links":[{"start":12,"end":17,"target":"p_alice"}]})",
                R"([{"caption":"roster","rows":[[{"text":"Player","links":[]},{"text":"Born","links":[]}],[{"text":"Alice","links":[]},{"text":"1984","links":[]}]]}])") +
      page_line("p_alice", "Alice", R"({"text":"Alice lives.","links":[]})");
  CorpusStore s = corpus_from_lines(corpus);
  const Table* t = s.find_table({"p_team", 0});
  REQUIRE(t != nullptr);

  // "Alice" cell matches the hyperlinked mention in the same page's sentence
  REQUIRE(t->rows[1][0].mentions.size() == 1);
  CHECK(t->rows[1][0].mentions[0].entity.canon == "p_alice");
  CHECK(t->rows[1][0].mentions[0].source == MentionSource::CellLink);

  // "1984" cell matches the value mention
  REQUIRE(t->rows[1][1].mentions.size() == 1);
  CHECK(t->rows[1][1].mentions[0].entity.canon == "T:1984");

  // header cells have no match anywhere: unique-cell entities
  REQUIRE(t->rows[0][0].mentions.size() == 1);
  CHECK(t->rows[0][0].mentions[0].entity.canon == "C:p_team:0:0:0");
  CHECK(t->rows[0][0].mentions[0].entity.kind == EntityKindTag::UniqueCell);
}

TEST_CASE("cell linking skips hyperlinked and empty cells") {
  std::string corpus = page_line(
      "p1", "One", R"({"text":"x.","links":[]})",
      R"([{"caption":"t","rows":[[{"text":"A","links":[{"start":0,"end":1,"target":"p1"}]},{"text":"  ","links":[]}]]}])");
  CorpusStore s = corpus_from_lines(corpus);
  const Table* t = s.find_table({"p1", 0});
  REQUIRE(t != nullptr);
  REQUIRE(t->rows[0][0].mentions.size() == 1);
  CHECK(t->rows[0][0].mentions[0].source == MentionSource::Hyperlink);
  CHECK(t->rows[0][1].mentions.empty());  // whitespace-only cell
}

TEST_CASE("enrichment is deterministic across thread counts") {
  std::ifstream f(testutil::data_path("data/mini_corpus.jsonl"));
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  CorpusStore a = corpus_from_lines(ss.str(), 1);
  CorpusStore b = corpus_from_lines(ss.str(), 8);
  CHECK(store_to_json(a) == store_to_json(b));
  CHECK(a.stats == b.stats);
}

TEST_CASE("store JSON round trip preserves everything") {
  CorpusStore& s = testutil::mini_store();
  json j = store_to_json(s);
  CorpusStore back = store_from_json(j);
  CHECK(store_to_json(back) == j);
  CHECK(back.stats == s.stats);
  CHECK(back.inlinks == s.inlinks);
  CHECK(back.alias_index == s.alias_index);
}

TEST_CASE("mini corpus stats are sane and all mention sources occur") {
  CorpusStore& s = testutil::mini_store();
  CHECK(s.stats.n_pages == 45);
  CHECK(s.stats.n_tables == 5);
  for (const char* src : {"hyperlink", "self", "value", "cell"}) {
    INFO(src);
    CHECK(s.stats.n_mentions.at(src) > 0);
  }
}
