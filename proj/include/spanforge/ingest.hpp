#pragma once

// Corpus ingestion: parse the JSONL page schema, validate it, then enrich
// with the three derived mention sources (self mentions, temporal/numeric
// values, cell links).

#include <algorithm>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spanforge/corpus.hpp"

namespace spanforge {

struct IngestStats {
  size_t n_pages = 0;
  size_t n_sentences = 0;
  size_t n_tables = 0;
  std::map<std::string, size_t> n_mentions;  // by source name

  bool operator==(const IngestStats& o) const {
    return n_pages == o.n_pages && n_sentences == o.n_sentences &&
           n_tables == o.n_tables && n_mentions == o.n_mentions;
  }
};

struct CorpusStore {
  std::map<std::string, Page> pages;                     // id-keyed
  std::map<std::string, std::set<std::string>> alias_index;
  std::map<std::string, std::set<std::string>> inlinks;  // target -> sources
  IngestStats stats;

  bool links_to(const std::string& from, const std::string& to) const {
    auto it = pages.find(from);
    return it != pages.end() && it->second.outlinks.count(to) > 0;
  }

  const Sentence* find_sentence(const SentenceLocator& loc) const {
    auto it = pages.find(loc.page);
    if (it == pages.end()) return nullptr;
    const Page& p = it->second;
    if (loc.paragraph < 0 ||
        loc.paragraph >= static_cast<int>(p.paragraphs.size()))
      return nullptr;
    const auto& par = p.paragraphs[loc.paragraph];
    if (loc.sentence < 0 || loc.sentence >= static_cast<int>(par.size()))
      return nullptr;
    return &par[loc.sentence];
  }

  const Table* find_table(const TableLocator& loc) const {
    auto it = pages.find(loc.page);
    if (it == pages.end()) return nullptr;
    const Page& p = it->second;
    if (loc.table < 0 || loc.table >= static_cast<int>(p.tables.size()))
      return nullptr;
    return &p.tables[loc.table];
  }
};

namespace detail {

inline bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

inline void check_offsets(const std::string& text, size_t start, size_t end,
                          const std::string& where) {
  if (!(start < end) || end > text.size())
    throw OffsetOutOfRange(where + ": [" + std::to_string(start) + "," +
                           std::to_string(end) + ") vs len " +
                           std::to_string(text.size()));
  if (is_utf8_continuation(static_cast<unsigned char>(text[start])) ||
      (end < text.size() &&
       is_utf8_continuation(static_cast<unsigned char>(text[end]))))
    throw OffsetOutOfRange(where + ": offset splits a UTF-8 character");
}

// Insert keeping the non-overlap invariant: on conflict the higher-priority
// (lower rank) existing mention wins; equal priority keeps the earlier one.
inline void insert_mention(std::vector<Mention>& mentions, Mention m) {
  for (const Mention& ex : mentions) {
    if (ex.overlaps(m)) {
      if (mention_priority(ex.source) <= mention_priority(m.source)) return;
    }
  }
  // m wins over any lower-priority overlaps
  mentions.erase(std::remove_if(mentions.begin(), mentions.end(),
                                [&](const Mention& ex) {
                                  return ex.overlaps(m) &&
                                         mention_priority(ex.source) >
                                             mention_priority(m.source);
                                }),
                 mentions.end());
  mentions.push_back(std::move(m));
  std::sort(mentions.begin(), mentions.end(),
            [](const Mention& a, const Mention& b) {
              return a.char_start < b.char_start;
            });
}

inline std::vector<Mention> parse_links(const json& jlinks,
                                        const std::string& text,
                                        const std::string& where,
                                        std::set<std::string>* outlinks) {
  std::vector<Mention> out;
  for (const json& jl : jlinks) {
    Mention m;
    m.char_start = jl.at("start").get<size_t>();
    m.char_end = jl.at("end").get<size_t>();
    check_offsets(text, m.char_start, m.char_end, where);
    m.entity = EntityId::page(jl.at("target").get<std::string>());
    m.source = MentionSource::Hyperlink;
    if (outlinks) outlinks->insert(jl.at("target").get<std::string>());
    insert_mention(out, std::move(m));
  }
  return out;
}

}  // namespace detail

inline void recompute_stats(CorpusStore& store);

// --------------------------------------------------------------------------
// parse_corpus: JSONL -> validated store with hyperlink mentions only.

inline CorpusStore parse_corpus(std::istream& lines) {
  CorpusStore store;
  std::string line;
  size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedRecord("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("title"))
      throw MalformedRecord("line " + std::to_string(lineno) +
                            ": missing id/title");
    Page page;
    try {
      page.id = j.at("id").get<std::string>();
      page.title = j.at("title").get<std::string>();
      page.topic_entity = EntityId::page(page.id);
      if (j.contains("aliases"))
        page.aliases = j.at("aliases").get<std::vector<std::string>>();
      if (std::find(page.aliases.begin(), page.aliases.end(), page.title) ==
          page.aliases.end())
        page.aliases.insert(page.aliases.begin(), page.title);

      int pi = 0;
      for (const json& jpar : j.value("paragraphs", json::array())) {
        std::vector<Sentence> par;
        int si = 0;
        for (const json& jsent : jpar) {
          Sentence s;
          s.text = jsent.at("text").get<std::string>();
          s.locator = {page.id, pi, si};
          s.mentions = detail::parse_links(
              jsent.value("links", json::array()), s.text,
              "page " + page.id + " sentence " + s.locator.str(),
              &page.outlinks);
          par.push_back(std::move(s));
          ++si;
        }
        page.paragraphs.push_back(std::move(par));
        ++pi;
      }

      int ti = 0;
      for (const json& jtab : j.value("tables", json::array())) {
        Table t;
        t.locator = {page.id, ti};
        t.caption = jtab.value("caption", std::string());
        size_t ncols = 0, ncells = 0;
        for (const json& jrow : jtab.at("rows")) {
          std::vector<Cell> row;
          for (const json& jcell : jrow) {
            Cell c;
            c.text = jcell.at("text").get<std::string>();
            c.mentions = detail::parse_links(
                jcell.value("links", json::array()), c.text,
                "page " + page.id + " table " + std::to_string(ti),
                &page.outlinks);
            row.push_back(std::move(c));
          }
          if (t.rows.empty())
            ncols = row.size();
          else if (row.size() != ncols)
            throw RaggedTable("page " + page.id + " table " +
                              std::to_string(ti));
          ncells += row.size();
          t.rows.push_back(std::move(row));
        }
        if (ncells > 500)
          throw TableTooLarge("page " + page.id + " table " +
                              std::to_string(ti) + ": " +
                              std::to_string(ncells) + " cells");
        page.tables.push_back(std::move(t));
        ++ti;
      }
    } catch (const json::exception& e) {
      throw MalformedRecord("line " + std::to_string(lineno) + ": " + e.what());
    }

    if (store.pages.count(page.id)) throw DuplicatePageId(page.id);
    for (const std::string& a : page.aliases)
      store.alias_index[a].insert(page.id);
    store.pages.emplace(page.id, std::move(page));
  }

  for (const auto& [id, page] : store.pages)
    for (const std::string& target : page.outlinks)
      store.inlinks[target].insert(id);

  recompute_stats(store);
  return store;
}

inline void recompute_stats(CorpusStore& store) {
  IngestStats st;
  st.n_pages = store.pages.size();
  auto count = [&](const std::vector<Mention>& ms) {
    for (const Mention& m : ms) ++st.n_mentions[mention_source_name(m.source)];
  };
  for (const auto& [id, page] : store.pages) {
    for (const auto& par : page.paragraphs) {
      st.n_sentences += par.size();
      for (const Sentence& s : par) count(s.mentions);
    }
    st.n_tables += page.tables.size();
    for (const Table& t : page.tables)
      for (const auto& row : t.rows)
        for (const Cell& c : row) count(c.mentions);
  }
  store.stats = std::move(st);
}

// --------------------------------------------------------------------------
// Self mentions: exact occurrences of the topic entity's aliases,
// longest-alias-first, left-to-right, never overlapping existing mentions.

inline std::vector<Mention> detect_self_mentions(const Sentence& sentence,
                                                 const Page& page) {
  std::vector<std::string> aliases = page.aliases;
  std::sort(aliases.begin(), aliases.end(),
            [](const std::string& a, const std::string& b) {
              if (a.size() != b.size()) return a.size() > b.size();
              return a < b;
            });
  aliases.erase(std::unique(aliases.begin(), aliases.end()), aliases.end());

  std::vector<Mention> found = sentence.mentions;  // occupancy tracking
  std::vector<Mention> out;
  for (const std::string& alias : aliases) {
    if (alias.empty()) continue;
    size_t pos = 0;
    while ((pos = sentence.text.find(alias, pos)) != std::string::npos) {
      Mention m{page.topic_entity, pos, pos + alias.size(),
                MentionSource::SelfMention};
      bool clash = std::any_of(found.begin(), found.end(),
                               [&](const Mention& ex) { return ex.overlaps(m); });
      if (!clash) {
        found.push_back(m);
        out.push_back(m);
        pos += alias.size();
      } else {
        pos += 1;
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Mention& a, const Mention& b) {
    return a.char_start < b.char_start;
  });
  return out;
}

// --------------------------------------------------------------------------
// Value mentions: deterministic rules standing in for an NER tool.
//   ISO dates YYYY-MM-DD        -> Temporal "T:YYYY-MM-DD"
//   standalone years 1000..2999 -> Temporal "T:YYYY"
//   standalone numbers          -> Numeric, thousands separators stripped

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_word_char(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace detail

inline std::vector<Mention> detect_value_mentions(const Sentence& sentence) {
  const std::string& t = sentence.text;
  std::vector<Mention> found = sentence.mentions;
  std::vector<Mention> out;
  size_t i = 0;
  while (i < t.size()) {
    if (!detail::is_digit(t[i]) ||
        (i > 0 && detail::is_word_char(t[i - 1]))) {
      ++i;
      continue;
    }
    size_t start = i;
    size_t end = start;
    EntityId entity;

    auto all_digits = [&](size_t a, size_t n) {
      if (a + n > t.size()) return false;
      for (size_t k = a; k < a + n; ++k)
        if (!detail::is_digit(t[k])) return false;
      return true;
    };

    // ISO date
    if (all_digits(start, 4) && start + 10 <= t.size() && t[start + 4] == '-' &&
        all_digits(start + 5, 2) && t[start + 7] == '-' &&
        all_digits(start + 8, 2) &&
        (start + 10 == t.size() || !detail::is_word_char(t[start + 10]))) {
      end = start + 10;
      entity = EntityId::temporal(t.substr(start, 10));
    } else {
      // number token: digits with optional commas and one decimal point
      size_t j = start;
      bool seen_point = false;
      while (j < t.size()) {
        if (detail::is_digit(t[j])) {
          ++j;
        } else if (t[j] == ',' && j + 1 < t.size() &&
                   detail::is_digit(t[j + 1]) && !seen_point) {
          ++j;
        } else if (t[j] == '.' && !seen_point && j + 1 < t.size() &&
                   detail::is_digit(t[j + 1])) {
          seen_point = true;
          ++j;
        } else {
          break;
        }
      }
      if (j < t.size() && detail::is_word_char(t[j])) {
        i = j + 1;  // glued to a word, e.g. "4th": not a value
        while (i < t.size() && detail::is_word_char(t[i])) ++i;
        continue;
      }
      end = j;
      std::string raw = t.substr(start, end - start);
      std::string norm;
      for (char c : raw)
        if (c != ',') norm.push_back(c);
      if (norm.size() == 4 && !seen_point && raw.find(',') == std::string::npos &&
          norm[0] >= '1' && norm[0] <= '2') {
        entity = EntityId::temporal(norm);  // year 1000..2999
      } else {
        entity = EntityId::numeric(norm);
      }
    }

    Mention m{entity, start, end, MentionSource::ValueDetector};
    bool clash = std::any_of(found.begin(), found.end(),
                             [&](const Mention& ex) { return ex.overlaps(m); });
    if (!clash) {
      found.push_back(m);
      out.push_back(m);
    }
    i = end;
  }
  return out;
}

// --------------------------------------------------------------------------
// Cell linking: for a cell without hyperlinks, match the whole trimmed cell
// text against related sentences (same page, or pages hyperlinking here). A
// mention covering the full match lends the cell its entity; otherwise the
// cell becomes its own unique entity. Empty cells get nothing.

namespace detail {

inline std::pair<size_t, size_t> trimmed_range(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\n')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\n'))
    --b;
  return {a, b};
}

inline const EntityId* covering_entity(const Sentence& sent, size_t start,
                                       size_t end) {
  for (const Mention& m : sent.mentions) {
    if (m.char_start <= start && end <= m.char_end) return &m.entity;
  }
  return nullptr;
}

}  // namespace detail

inline void link_table_cells(Page& page, const CorpusStore& store) {
  // related sentence sources in deterministic order: same page first,
  // then inbound-linking pages by id
  std::vector<const Page*> sources{&page};
  auto in = store.inlinks.find(page.id);
  if (in != store.inlinks.end()) {
    for (const std::string& pid : in->second) {
      if (pid == page.id) continue;
      auto it = store.pages.find(pid);
      if (it != store.pages.end()) sources.push_back(&it->second);
    }
  }

  int ti = 0;
  for (Table& table : page.tables) {
    for (int r = 0; r < table.n_rows(); ++r) {
      for (int c = 0; c < table.n_cols(); ++c) {
        Cell& cell = table.rows[r][c];
        if (!cell.mentions.empty()) continue;  // hyperlinked already
        auto [a, b] = detail::trimmed_range(cell.text);
        if (a == b) continue;  // empty cell
        std::string needle = cell.text.substr(a, b - a);

        const EntityId* linked = nullptr;
        for (const Page* src : sources) {
          for (const auto& par : src->paragraphs) {
            for (const Sentence& sent : par) {
              size_t pos = 0;
              while ((pos = sent.text.find(needle, pos)) != std::string::npos) {
                linked = detail::covering_entity(sent, pos, pos + needle.size());
                if (linked) break;
                pos += 1;
              }
              if (linked) break;
            }
            if (linked) break;
          }
          if (linked) break;
        }

        Mention m;
        m.char_start = a;
        m.char_end = b;
        m.source = MentionSource::CellLink;
        m.entity = linked ? *linked
                          : EntityId::unique_cell(page.id, ti, r, c);
        cell.mentions.push_back(std::move(m));
      }
    }
    ++ti;
  }
}

// --------------------------------------------------------------------------
// Full enrichment pipeline. Sentence-level enrichment is independent per
// page; cell linking needs all sentence mentions, so it runs as a second
// phase. Results are applied in page-id order regardless of scheduling.

inline void enrich_store(CorpusStore& store, unsigned threads = 1) {
  std::vector<Page*> order;
  order.reserve(store.pages.size());
  for (auto& [id, page] : store.pages) order.push_back(&page);

  parallel_for(order.size(), threads, [&](size_t i) {
    Page& page = *order[i];
    for (auto& par : page.paragraphs) {
      for (Sentence& s : par) {
        for (Mention m : detect_self_mentions(s, page))
          detail::insert_mention(s.mentions, std::move(m));
        for (Mention m : detect_value_mentions(s))
          detail::insert_mention(s.mentions, std::move(m));
      }
    }
  });

  parallel_for(order.size(), threads,
               [&](size_t i) { link_table_cells(*order[i], store); });

  recompute_stats(store);
}

// --------------------------------------------------------------------------
// Store (de)serialization: a single JSON document, pages in id order.

inline json page_to_json(const Page& p) {
  json jp{{"id", p.id}, {"title", p.title}, {"aliases", p.aliases}};
  json jpars = json::array();
  for (const auto& par : p.paragraphs) {
    json jpar = json::array();
    for (const Sentence& s : par) {
      json jms = json::array();
      for (const Mention& m : s.mentions) jms.push_back(to_json(m));
      jpar.push_back(json{{"text", s.text}, {"mentions", jms}});
    }
    jpars.push_back(jpar);
  }
  jp["paragraphs"] = jpars;
  json jtabs = json::array();
  for (const Table& t : p.tables) {
    json jrows = json::array();
    for (const auto& row : t.rows) {
      json jrow = json::array();
      for (const Cell& c : row) {
        json jms = json::array();
        for (const Mention& m : c.mentions) jms.push_back(to_json(m));
        jrow.push_back(json{{"text", c.text}, {"mentions", jms}});
      }
      jrows.push_back(jrow);
    }
    jtabs.push_back(json{{"caption", t.caption}, {"rows", jrows}});
  }
  jp["tables"] = jtabs;
  return jp;
}

inline Page page_from_json(const json& jp) {
  Page p;
  p.id = jp.at("id").get<std::string>();
  p.title = jp.at("title").get<std::string>();
  p.aliases = jp.at("aliases").get<std::vector<std::string>>();
  p.topic_entity = EntityId::page(p.id);
  int pi = 0;
  for (const json& jpar : jp.at("paragraphs")) {
    std::vector<Sentence> par;
    int si = 0;
    for (const json& jsent : jpar) {
      Sentence s;
      s.text = jsent.at("text").get<std::string>();
      s.locator = {p.id, pi, si};
      for (const json& jm : jsent.at("mentions")) {
        Mention m = mention_from_json(jm);
        if (m.source == MentionSource::Hyperlink &&
            m.entity.kind == EntityKindTag::Page)
          p.outlinks.insert(m.entity.canon);
        s.mentions.push_back(std::move(m));
      }
      par.push_back(std::move(s));
      ++si;
    }
    p.paragraphs.push_back(std::move(par));
    ++pi;
  }
  int ti = 0;
  for (const json& jtab : jp.at("tables")) {
    Table t;
    t.locator = {p.id, ti};
    t.caption = jtab.value("caption", std::string());
    for (const json& jrow : jtab.at("rows")) {
      std::vector<Cell> row;
      for (const json& jcell : jrow) {
        Cell c;
        c.text = jcell.at("text").get<std::string>();
        for (const json& jm : jcell.at("mentions")) {
          Mention m = mention_from_json(jm);
          if (m.source == MentionSource::Hyperlink &&
              m.entity.kind == EntityKindTag::Page)
            p.outlinks.insert(m.entity.canon);
          c.mentions.push_back(std::move(m));
        }
        row.push_back(std::move(c));
      }
      t.rows.push_back(std::move(row));
    }
    p.tables.push_back(std::move(t));
    ++ti;
  }
  return p;
}

inline json store_to_json(const CorpusStore& store) {
  json pages = json::array();
  for (const auto& [id, p] : store.pages) pages.push_back(page_to_json(p));
  return json{{"pages", pages}};
}

inline CorpusStore store_from_json(const json& j) {
  CorpusStore store;
  for (const json& jp : j.at("pages")) {
    Page p = page_from_json(jp);
    for (const std::string& a : p.aliases) store.alias_index[a].insert(p.id);
    std::string id = p.id;
    store.pages.emplace(id, std::move(p));
  }
  for (const auto& [id, page] : store.pages)
    for (const std::string& target : page.outlinks)
      store.inlinks[target].insert(id);
  recompute_stats(store);
  return store;
}

}  // namespace spanforge
