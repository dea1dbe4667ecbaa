#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <thread>

#include "spanforge/corpus.hpp"
#include "spanforge/tokenizer.hpp"

using namespace spanforge;

TEST_CASE("entity id factories and canonical forms") {
  CHECK(EntityId::page("city_paris").canon == "city_paris");
  CHECK(EntityId::temporal("1984").canon == "T:1984");
  CHECK(EntityId::numeric("3.5").canon == "N:3.5");
  CHECK(EntityId::unique_cell("pg", 0, 2, 3).canon == "C:pg:0:2:3");

  CHECK_THROWS_AS(EntityId::page(""), MalformedId);
  CHECK_THROWS_AS(EntityId::page("T:oops"), MalformedId);
  CHECK_THROWS_AS(EntityId::temporal(""), MalformedId);
}

TEST_CASE("entity id parse round trips and rejects malformed ids") {
  for (const std::string& canon :
       {"plain_page", "T:2001-01-05", "N:1234", "C:pg:1:0:4"}) {
    EntityId e = EntityId::parse(canon);
    CHECK(e.canon == canon);
    CHECK(EntityId::parse(e.canon) == e);
  }
  CHECK(EntityId::parse("T:1984").kind == EntityKindTag::Temporal);
  CHECK(EntityId::parse("N:7").kind == EntityKindTag::Numeric);
  CHECK(EntityId::parse("C:a:0:1:2").kind == EntityKindTag::UniqueCell);
  CHECK(EntityId::parse("x").kind == EntityKindTag::Page);

  CHECK_THROWS_AS(EntityId::parse(""), MalformedId);
  CHECK_THROWS_AS(EntityId::parse("T:"), MalformedId);
  CHECK_THROWS_AS(EntityId::parse("N:"), MalformedId);
  CHECK_THROWS_AS(EntityId::parse("C:pg:1:2"), MalformedId);
  CHECK_THROWS_AS(EntityId::parse("C:pg:a:b:c"), MalformedId);
}

TEST_CASE("entity class split: values vs real-world") {
  CHECK(entity_kind(EntityId::parse("T:1984")) == EntityClass::Value);
  CHECK(entity_kind(EntityId::parse("N:12")) == EntityClass::Value);
  CHECK(entity_kind(EntityId::parse("some_page")) == EntityClass::RealWorld);
  CHECK(entity_kind(EntityId::parse("C:pg:0:1:1")) == EntityClass::RealWorld);
}

TEST_CASE("pair key canonicalizes order and rejects identical members") {
  EntityId a = EntityId::page("alpha");
  EntityId b = EntityId::page("beta");
  PairKey k1 = make_pair_key(a, b);
  PairKey k2 = make_pair_key(b, a);
  CHECK(k1 == k2);
  CHECK(k1.lo == a);
  CHECK(k1.hi == b);
  CHECK_THROWS_AS(make_pair_key(a, a), IdenticalEntities);
}

TEST_CASE("mention priority order: hyperlink wins") {
  CHECK(mention_priority(MentionSource::Hyperlink) <
        mention_priority(MentionSource::SelfMention));
  CHECK(mention_priority(MentionSource::SelfMention) <
        mention_priority(MentionSource::ValueDetector));
  CHECK(mention_priority(MentionSource::ValueDetector) <
        mention_priority(MentionSource::CellLink));
  for (MentionSource s : {MentionSource::Hyperlink, MentionSource::SelfMention,
                          MentionSource::ValueDetector, MentionSource::CellLink})
    CHECK(mention_source_from_name(mention_source_name(s)) == s);
}

TEST_CASE("tokenizer lowercases, splits punctuation, keeps byte offsets") {
  auto toks = tokenize("Alice Aaronson was born in 1984, right?");
  std::vector<std::string> words;
  for (auto& t : toks) words.push_back(t.text);
  CHECK(words == std::vector<std::string>{"alice", "aaronson", "was", "born",
                                          "in", "1984", ",", "right", "?"});
  // offsets index the original bytes
  CHECK(toks[0].char_start == 0);
  CHECK(toks[0].char_end == 5);
  CHECK(toks[5].text == "1984");
  CHECK(toks[6].text == ",");
  CHECK(toks[6].char_end - toks[6].char_start == 1);

  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t\n").empty());
}

TEST_CASE("char_range_to_tokens maps byte ranges to token spans") {
  auto toks = tokenize("Alice Aaronson was born");
  auto [a, b] = char_range_to_tokens(toks, 0, 14);  // "Alice Aaronson"
  CHECK(a == 0);
  CHECK(b == 2);
  auto [c, d] = char_range_to_tokens(toks, 15, 18);  // "was"
  CHECK(c == 2);
  CHECK(d == 3);
  auto [e, f] = char_range_to_tokens(toks, 100, 110);  // out of range
  CHECK(e == f);
}

TEST_CASE("vocab reserves special ids and sorts corpus tokens") {
  Vocab v({"zebra", "apple", "apple"});
  CHECK(v.size() == kFirstRegularId + 2);
  CHECK(v.id("[CLS]") == kCls);
  CHECK(v.id("[QUESTION]") == kQuestion);
  CHECK(v.id("zebra") == kFirstRegularId);  // insertion order, deduplicated
  CHECK(v.id("apple") == kFirstRegularId + 1);
  CHECK(v.id("missing") == kUnk);
  CHECK(v.str(kFirstRegularId) == "zebra");
}

TEST_CASE("rng is deterministic and uniform sampling stays in range") {
  Rng a(42), b(42), c(43);
  bool differ = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
    if (x != c.next_u64()) differ = true;
  }
  CHECK(differ);
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    CHECK(r.uniform(10) < 10);
    double u = r.uniform_real();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("rng shuffle is a permutation and seed-stable") {
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  Rng r1(9), r2(9);
  std::vector<int> a = v, b = v;
  r1.shuffle(a);
  r2.shuffle(b);
  CHECK(a == b);
  CHECK(std::multiset<int>(a.begin(), a.end()) ==
        std::multiset<int>(v.begin(), v.end()));
}

TEST_CASE("fnv1a matches reference values") {
  // standard FNV-1a test vectors
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("parallel_for writes results by index, identical across widths") {
  std::vector<int> r1(100), r8(100);
  parallel_for(100, 1, [&](size_t i) { r1[i] = static_cast<int>(i * i); });
  parallel_for(100, 8, [&](size_t i) { r8[i] = static_cast<int>(i * i); });
  CHECK(r1 == r8);
}

TEST_CASE("locators order and print stably") {
  SentenceLocator s{"pg", 1, 2};
  CHECK(s.str() == "pg/1/2");
  CHECK(SentenceLocator{"pg", 1, 1} < s);
  TableLocator t{"pg", 0};
  CHECK(t.str() == "pg/t0");
}

TEST_CASE("mention json round trip") {
  Mention m{EntityId::parse("T:1984"), 3, 9, MentionSource::ValueDetector};
  CHECK(mention_from_json(to_json(m)) == m);
}
