#pragma once

// Entity-pair inverted index and the distant-supervision constraints turning
// postings into per-query candidate evidence groups.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "spanforge/ingest.hpp"

namespace spanforge {

enum class EvidenceKind { Text, Table };

// Where a pair member sits inside the evidence (or query) unit.
struct MentionCoord {
  int col = -1;  // cell column for table evidence, -1 for text
  size_t start = 0;
  size_t end = 0;

  bool operator==(const MentionCoord& o) const {
    return col == o.col && start == o.start && end == o.end;
  }
};

struct EvidenceRef {
  EvidenceKind kind = EvidenceKind::Text;
  SentenceLocator sent;  // Text
  TableLocator table;    // Table
  int row = 0;           // Table
  PairKey pair;
  MentionCoord lo_at, hi_at;

  std::string unit_key() const {
    return kind == EvidenceKind::Text ? "s:" + sent.str()
                                      : "t:" + table.str() + "/r" +
                                            std::to_string(row);
  }
  // dedup/sort key: (kind, locator, pair)
  std::string sort_key() const { return unit_key() + "|" + pair.str(); }

  const std::string& page() const {
    return kind == EvidenceKind::Text ? sent.page : table.page;
  }

  bool operator==(const EvidenceRef& o) const {
    return sort_key() == o.sort_key();
  }
  bool operator<(const EvidenceRef& o) const {
    return sort_key() < o.sort_key();
  }
};

struct PairIndex {
  std::map<PairKey, std::vector<EvidenceRef>> postings;  // sorted, deduped
};

struct QueryPair {
  PairKey pair;
  bool text_eligible = false;  // contains the query page's topic entity
  MentionCoord lo_at, hi_at;   // first mention of each member in the query
  std::vector<EvidenceRef> candidates;
};

struct QueryGroup {
  SentenceLocator query;
  std::vector<QueryPair> pairs;
};

// --------------------------------------------------------------------------

namespace detail {

// first mention of each distinct entity, in mention order
inline std::vector<Mention> distinct_entities(const std::vector<Mention>& ms) {
  std::vector<Mention> out;
  for (const Mention& m : ms) {
    bool seen = std::any_of(out.begin(), out.end(), [&](const Mention& o) {
      return o.entity == m.entity;
    });
    if (!seen) out.push_back(m);
  }
  return out;
}

}  // namespace detail

inline std::vector<QueryPair> extract_query_pairs(const Sentence& sentence,
                                                  const Page& page) {
  std::vector<Mention> ents = detail::distinct_entities(sentence.mentions);
  std::vector<QueryPair> out;
  for (size_t i = 0; i < ents.size(); ++i) {
    for (size_t j = i + 1; j < ents.size(); ++j) {
      const Mention& a = ents[i];
      const Mention& b = ents[j];
      if (entity_kind(a.entity) != EntityClass::RealWorld &&
          entity_kind(b.entity) != EntityClass::RealWorld)
        continue;
      QueryPair qp;
      qp.pair = make_pair_key(a.entity, b.entity);
      qp.text_eligible = a.entity == page.topic_entity ||
                         b.entity == page.topic_entity;
      const Mention& lo = qp.pair.lo == a.entity ? a : b;
      const Mention& hi = qp.pair.lo == a.entity ? b : a;
      qp.lo_at = {-1, lo.char_start, lo.char_end};
      qp.hi_at = {-1, hi.char_start, hi.char_end};
      out.push_back(std::move(qp));
    }
  }
  return out;
}

// --------------------------------------------------------------------------

namespace detail {

inline void add_text_refs(const Sentence& s,
                          std::map<PairKey, std::vector<EvidenceRef>>& out) {
  std::vector<Mention> ents = distinct_entities(s.mentions);
  for (size_t i = 0; i < ents.size(); ++i) {
    for (size_t j = i + 1; j < ents.size(); ++j) {
      EvidenceRef ref;
      ref.kind = EvidenceKind::Text;
      ref.sent = s.locator;
      ref.pair = make_pair_key(ents[i].entity, ents[j].entity);
      const Mention& lo = ref.pair.lo == ents[i].entity ? ents[i] : ents[j];
      const Mention& hi = ref.pair.lo == ents[i].entity ? ents[j] : ents[i];
      ref.lo_at = {-1, lo.char_start, lo.char_end};
      ref.hi_at = {-1, hi.char_start, hi.char_end};
      out[ref.pair].push_back(std::move(ref));
    }
  }
}

struct RowEntity {
  EntityId entity;
  MentionCoord at;
};

inline void add_row_refs(const Table& t, int row,
                         std::map<PairKey, std::vector<EvidenceRef>>& out) {
  std::vector<RowEntity> ents;
  for (int c = 0; c < t.n_cols(); ++c) {
    for (const Mention& m : t.rows[row][c].mentions) {
      bool seen = std::any_of(ents.begin(), ents.end(), [&](const RowEntity& e) {
        return e.entity == m.entity;
      });
      if (!seen) ents.push_back({m.entity, {c, m.char_start, m.char_end}});
    }
  }
  for (size_t i = 0; i < ents.size(); ++i) {
    for (size_t j = i + 1; j < ents.size(); ++j) {
      EvidenceRef ref;
      ref.kind = EvidenceKind::Table;
      ref.table = t.locator;
      ref.row = row;
      ref.pair = make_pair_key(ents[i].entity, ents[j].entity);
      ref.lo_at = ref.pair.lo == ents[i].entity ? ents[i].at : ents[j].at;
      ref.hi_at = ref.pair.lo == ents[i].entity ? ents[j].at : ents[i].at;
      out[ref.pair].push_back(std::move(ref));
    }
  }
}

}  // namespace detail

inline PairIndex build_index(const CorpusStore& store) {
  PairIndex index;
  for (const auto& [id, page] : store.pages) {
    for (const auto& par : page.paragraphs)
      for (const Sentence& s : par) detail::add_text_refs(s, index.postings);
    for (const Table& t : page.tables)
      for (int r = 0; r < t.n_rows(); ++r)
        detail::add_row_refs(t, r, index.postings);
  }
  for (auto& [pair, refs] : index.postings) {
    std::sort(refs.begin(), refs.end());
    refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
  }
  return index;
}

// The §-style relatedness predicate, shared by lookup and the test oracle:
//   text:  same page, or query page links to the evidence page
//   table: the above, or the table's page links to the query page
inline bool evidence_admissible(const EvidenceRef& ref,
                                const SentenceLocator& query,
                                const std::string& query_text,
                                const CorpusStore& store) {
  if (ref.kind == EvidenceKind::Text) {
    if (ref.sent == query) return false;
    if (!(ref.sent.page == query.page ||
          store.links_to(query.page, ref.sent.page)))
      return false;
    const Sentence* ev = store.find_sentence(ref.sent);
    if (ev && ev->text == query_text) return false;
    return true;
  }
  return ref.table.page == query.page ||
         store.links_to(query.page, ref.table.page) ||
         store.links_to(ref.table.page, query.page);
}

inline std::vector<EvidenceRef> lookup(const PairIndex& index,
                                       const PairKey& pair,
                                       const SentenceLocator& query,
                                       const CorpusStore& store) {
  auto it = index.postings.find(pair);
  if (it == index.postings.end()) return {};
  const Sentence* qs = store.find_sentence(query);
  std::string qtext = qs ? qs->text : std::string();
  std::vector<EvidenceRef> out;
  for (const EvidenceRef& ref : it->second)
    if (evidence_admissible(ref, query, qtext, store)) out.push_back(ref);
  return out;
}

// --------------------------------------------------------------------------

enum class Profile { Text, Hybrid };

inline Profile profile_from_name(const std::string& s) {
  if (s == "text") return Profile::Text;
  if (s == "hybrid") return Profile::Hybrid;
  throw SchemaViolation("unknown profile: " + s);
}

inline const char* profile_name(Profile p) {
  return p == Profile::Text ? "text" : "hybrid";
}

inline std::vector<QueryGroup> build_query_groups(const CorpusStore& store,
                                                  const PairIndex& index,
                                                  Profile profile,
                                                  unsigned threads = 1) {
  std::vector<const Sentence*> sentences;
  std::vector<const Page*> owners;
  for (const auto& [id, page] : store.pages)
    for (const auto& par : page.paragraphs)
      for (const Sentence& s : par) {
        sentences.push_back(&s);
        owners.push_back(&page);
      }

  std::vector<QueryGroup> slots(sentences.size());
  parallel_for(sentences.size(), threads, [&](size_t i) {
    const Sentence& s = *sentences[i];
    QueryGroup g;
    g.query = s.locator;
    for (QueryPair qp : extract_query_pairs(s, *owners[i])) {
      std::vector<EvidenceRef> cands = lookup(index, qp.pair, s.locator, store);
      cands.erase(std::remove_if(cands.begin(), cands.end(),
                                 [&](const EvidenceRef& ref) {
                                   if (ref.kind == EvidenceKind::Text)
                                     return !qp.text_eligible;
                                   // Table refs: dropped in text-only profile
                                   return profile == Profile::Text;
                                 }),
                  cands.end());
      if (cands.empty()) continue;
      qp.candidates = std::move(cands);
      g.pairs.push_back(std::move(qp));
    }
    if (!g.pairs.empty()) slots[i] = std::move(g);
  });

  std::vector<QueryGroup> out;
  for (QueryGroup& g : slots) {
    if (g.pairs.empty()) continue;
    if (profile == Profile::Hybrid) {
      bool has_table = false;
      for (const QueryPair& qp : g.pairs)
        for (const EvidenceRef& ref : qp.candidates)
          if (ref.kind == EvidenceKind::Table) has_table = true;
      if (!has_table) continue;
    }
    out.push_back(std::move(g));
  }
  std::sort(out.begin(), out.end(), [](const QueryGroup& a, const QueryGroup& b) {
    return a.query < b.query;
  });
  return out;
}

// --------------------------------------------------------------------------
// JSONL serialization of groups

inline json to_json(const MentionCoord& c) {
  return json{{"col", c.col}, {"start", c.start}, {"end", c.end}};
}

inline MentionCoord mention_coord_from_json(const json& j) {
  return {j.at("col").get<int>(), j.at("start").get<size_t>(),
          j.at("end").get<size_t>()};
}

inline json to_json(const EvidenceRef& ref) {
  json j;
  if (ref.kind == EvidenceKind::Text) {
    j["kind"] = "text";
    j["sent"] = to_json(ref.sent);
  } else {
    j["kind"] = "table";
    j["table"] = to_json(ref.table);
    j["row"] = ref.row;
  }
  j["pair"] = json{{"lo", ref.pair.lo.canon}, {"hi", ref.pair.hi.canon}};
  j["lo_at"] = to_json(ref.lo_at);
  j["hi_at"] = to_json(ref.hi_at);
  return j;
}

inline EvidenceRef evidence_ref_from_json(const json& j) {
  EvidenceRef ref;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "text") {
    ref.kind = EvidenceKind::Text;
    ref.sent = sentence_locator_from_json(j.at("sent"));
  } else if (kind == "table") {
    ref.kind = EvidenceKind::Table;
    ref.table = table_locator_from_json(j.at("table"));
    ref.row = j.at("row").get<int>();
  } else {
    throw SchemaViolation("bad evidence kind: " + kind);
  }
  ref.pair = {EntityId::parse(j.at("pair").at("lo").get<std::string>()),
              EntityId::parse(j.at("pair").at("hi").get<std::string>())};
  ref.lo_at = mention_coord_from_json(j.at("lo_at"));
  ref.hi_at = mention_coord_from_json(j.at("hi_at"));
  return ref;
}

inline json to_json(const QueryGroup& g) {
  json jpairs = json::array();
  for (const QueryPair& qp : g.pairs) {
    json jc = json::array();
    for (const EvidenceRef& ref : qp.candidates) jc.push_back(to_json(ref));
    jpairs.push_back(json{{"pair", {{"lo", qp.pair.lo.canon},
                                    {"hi", qp.pair.hi.canon}}},
                          {"text_eligible", qp.text_eligible},
                          {"lo_at", to_json(qp.lo_at)},
                          {"hi_at", to_json(qp.hi_at)},
                          {"candidates", jc}});
  }
  return json{{"query", to_json(g.query)}, {"pairs", jpairs}};
}

inline QueryGroup query_group_from_json(const json& j) {
  QueryGroup g;
  g.query = sentence_locator_from_json(j.at("query"));
  for (const json& jp : j.at("pairs")) {
    QueryPair qp;
    qp.pair = {EntityId::parse(jp.at("pair").at("lo").get<std::string>()),
               EntityId::parse(jp.at("pair").at("hi").get<std::string>())};
    qp.text_eligible = jp.at("text_eligible").get<bool>();
    qp.lo_at = mention_coord_from_json(jp.at("lo_at"));
    qp.hi_at = mention_coord_from_json(jp.at("hi_at"));
    for (const json& jc : jp.at("candidates"))
      qp.candidates.push_back(evidence_ref_from_json(jc));
    g.pairs.push_back(std::move(qp));
  }
  return g;
}

}  // namespace spanforge
