#pragma once

// Canonical domain types shared by the whole pipeline: entity ids, mentions,
// pages/sentences/tables and the unordered entity-pair key. All types are
// immutable after construction and safe to share across readers.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanforge/common.hpp"

namespace spanforge {

using json = nlohmann::ordered_json;

enum class EntityKindTag { Page, Temporal, Numeric, UniqueCell };
enum class EntityClass { RealWorld, Value };

// An entity id is fully determined by its canonical string:
//   Page       -> the page id itself (must not collide with the prefixes below)
//   Temporal   -> "T:<value>"
//   Numeric    -> "N:<normalized number>"
//   UniqueCell -> "C:<page>:<table>:<row>:<col>"
struct EntityId {
  EntityKindTag kind = EntityKindTag::Page;
  std::string canon;

  bool operator==(const EntityId& o) const { return canon == o.canon; }
  bool operator!=(const EntityId& o) const { return canon != o.canon; }
  bool operator<(const EntityId& o) const { return canon < o.canon; }

  static EntityId page(const std::string& id) {
    if (id.empty()) throw MalformedId("empty page id");
    if (id.rfind("T:", 0) == 0 || id.rfind("N:", 0) == 0 ||
        id.rfind("C:", 0) == 0)
      throw MalformedId("page id collides with a reserved prefix: " + id);
    return {EntityKindTag::Page, id};
  }
  static EntityId temporal(const std::string& value) {
    if (value.empty()) throw MalformedId("empty temporal value");
    return {EntityKindTag::Temporal, "T:" + value};
  }
  static EntityId numeric(const std::string& value) {
    if (value.empty()) throw MalformedId("empty numeric value");
    return {EntityKindTag::Numeric, "N:" + value};
  }
  static EntityId unique_cell(const std::string& page, int table, int row,
                              int col) {
    return {EntityKindTag::UniqueCell, "C:" + page + ":" +
                                           std::to_string(table) + ":" +
                                           std::to_string(row) + ":" +
                                           std::to_string(col)};
  }

  static EntityId parse(const std::string& canon) {
    if (canon.empty()) throw MalformedId("empty id");
    if (canon.rfind("T:", 0) == 0) {
      if (canon.size() == 2) throw MalformedId(canon);
      return {EntityKindTag::Temporal, canon};
    }
    if (canon.rfind("N:", 0) == 0) {
      if (canon.size() == 2) throw MalformedId(canon);
      return {EntityKindTag::Numeric, canon};
    }
    if (canon.rfind("C:", 0) == 0) {
      // C:<page>:<table>:<row>:<col>, coordinates are non-negative integers
      size_t p1 = canon.rfind(':');
      size_t p2 = canon.rfind(':', p1 == std::string::npos ? 0 : p1 - 1);
      size_t p3 = p2 == std::string::npos || p2 == 0
                      ? std::string::npos
                      : canon.rfind(':', p2 - 1);
      if (p1 == std::string::npos || p2 == std::string::npos ||
          p3 == std::string::npos || p3 < 2 || p3 == 1)
        throw MalformedId(canon);
      auto digits = [&](size_t a, size_t b) {
        if (a >= b) return false;
        for (size_t i = a; i < b; ++i)
          if (canon[i] < '0' || canon[i] > '9') return false;
        return true;
      };
      if (!digits(p3 + 1, p2) || !digits(p2 + 1, p1) ||
          !digits(p1 + 1, canon.size()) || p3 <= 2)
        throw MalformedId(canon);
      return {EntityKindTag::UniqueCell, canon};
    }
    return {EntityKindTag::Page, canon};
  }
};

inline EntityClass entity_kind(const EntityId& id) {
  switch (id.kind) {
    case EntityKindTag::Temporal:
    case EntityKindTag::Numeric:
      return EntityClass::Value;
    default:
      return EntityClass::RealWorld;  // pages and unique cells
  }
}

inline EntityClass entity_kind(const std::string& canon) {
  return entity_kind(EntityId::parse(canon));
}

enum class MentionSource { Hyperlink, SelfMention, ValueDetector, CellLink };

inline int mention_priority(MentionSource s) {
  switch (s) {
    case MentionSource::Hyperlink: return 0;
    case MentionSource::SelfMention: return 1;
    case MentionSource::ValueDetector: return 2;
    case MentionSource::CellLink: return 3;
  }
  return 3;
}

inline const char* mention_source_name(MentionSource s) {
  switch (s) {
    case MentionSource::Hyperlink: return "hyperlink";
    case MentionSource::SelfMention: return "self";
    case MentionSource::ValueDetector: return "value";
    case MentionSource::CellLink: return "cell";
  }
  return "?";
}

inline MentionSource mention_source_from_name(const std::string& s) {
  if (s == "hyperlink") return MentionSource::Hyperlink;
  if (s == "self") return MentionSource::SelfMention;
  if (s == "value") return MentionSource::ValueDetector;
  if (s == "cell") return MentionSource::CellLink;
  throw SchemaViolation("unknown mention source: " + s);
}

// Byte-offset half-open range into the owning text.
struct Mention {
  EntityId entity;
  size_t char_start = 0;
  size_t char_end = 0;
  MentionSource source = MentionSource::Hyperlink;

  bool overlaps(const Mention& o) const {
    return char_start < o.char_end && o.char_start < char_end;
  }
  bool operator==(const Mention& o) const {
    return entity == o.entity && char_start == o.char_start &&
           char_end == o.char_end && source == o.source;
  }
};

struct SentenceLocator {
  std::string page;
  int paragraph = 0;
  int sentence = 0;

  auto tie() const { return std::tie(page, paragraph, sentence); }
  bool operator==(const SentenceLocator& o) const { return tie() == o.tie(); }
  bool operator!=(const SentenceLocator& o) const { return tie() != o.tie(); }
  bool operator<(const SentenceLocator& o) const { return tie() < o.tie(); }
  std::string str() const {
    return page + "/" + std::to_string(paragraph) + "/" +
           std::to_string(sentence);
  }
};

struct Sentence {
  std::string text;
  std::vector<Mention> mentions;  // sorted by char_start, non-overlapping
  SentenceLocator locator;
};

struct Cell {
  std::string text;
  std::vector<Mention> mentions;
};

struct TableLocator {
  std::string page;
  int table = 0;

  auto tie() const { return std::tie(page, table); }
  bool operator==(const TableLocator& o) const { return tie() == o.tie(); }
  bool operator<(const TableLocator& o) const { return tie() < o.tie(); }
  std::string str() const { return page + "/t" + std::to_string(table); }
};

// Rectangular grid; row 0 is the header row. At most 500 cells.
struct Table {
  TableLocator locator;
  std::string caption;
  std::vector<std::vector<Cell>> rows;

  int n_rows() const { return static_cast<int>(rows.size()); }
  int n_cols() const { return rows.empty() ? 0 : static_cast<int>(rows[0].size()); }
};

struct Page {
  std::string id;
  std::string title;
  std::vector<std::string> aliases;  // title always a member
  EntityId topic_entity;             // Page kind, == own id
  std::vector<std::vector<Sentence>> paragraphs;
  std::vector<Table> tables;
  std::set<std::string> outlinks;  // page ids hyperlinked from this page
};

// Unordered entity pair, canonicalized so lo < hi by canonical string.
struct PairKey {
  EntityId lo, hi;

  auto tie() const { return std::tie(lo.canon, hi.canon); }
  bool operator==(const PairKey& o) const { return tie() == o.tie(); }
  bool operator<(const PairKey& o) const { return tie() < o.tie(); }
  std::string str() const { return lo.canon + "|" + hi.canon; }
};

inline PairKey make_pair_key(const EntityId& a, const EntityId& b) {
  if (a == b) throw IdenticalEntities(a.canon);
  if (a.canon < b.canon) return {a, b};
  return {b, a};
}

// ---------------------------------------------------------------------------
// JSON serialization (round-trip; stable field order via ordered_json)

inline json to_json(const Mention& m) {
  return json{{"entity", m.entity.canon},
              {"start", m.char_start},
              {"end", m.char_end},
              {"source", mention_source_name(m.source)}};
}

inline Mention mention_from_json(const json& j) {
  Mention m;
  m.entity = EntityId::parse(j.at("entity").get<std::string>());
  m.char_start = j.at("start").get<size_t>();
  m.char_end = j.at("end").get<size_t>();
  m.source = mention_source_from_name(j.at("source").get<std::string>());
  return m;
}

inline json to_json(const SentenceLocator& l) {
  return json{{"page", l.page}, {"par", l.paragraph}, {"sent", l.sentence}};
}

inline SentenceLocator sentence_locator_from_json(const json& j) {
  return {j.at("page").get<std::string>(), j.at("par").get<int>(),
          j.at("sent").get<int>()};
}

inline json to_json(const TableLocator& l) {
  return json{{"page", l.page}, {"table", l.table}};
}

inline TableLocator table_locator_from_json(const json& j) {
  return {j.at("page").get<std::string>(), j.at("table").get<int>()};
}

}  // namespace spanforge
