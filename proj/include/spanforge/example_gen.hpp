#pragma once

// Pre-training example assembly: evidence building under token budgets,
// reasoning-category sampling, [QUESTION] masking, MLM target selection and
// JSONL serialization. Everything is a pure function of (store, group,
// config, seed).

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spanforge/pair_index.hpp"
#include "spanforge/tokenizer.hpp"

namespace spanforge {

struct BudgetConfig {
  int query_max = 100;
  int evidence_max_two = 200;
  int evidence_max_one = 400;
  int cell_max = 20;
  int snippet_columns_max = 5;  // sampled columns in addition to column 0
  int snippet_rows_max = 48;    // snippet-local row ids must fit embeddings
  int total_max = 512;
};

enum class ReasoningCategory { SinglePair, DisjointPairs, Intersection, Bridging };

inline const char* category_name(ReasoningCategory c) {
  switch (c) {
    case ReasoningCategory::SinglePair: return "single_pair";
    case ReasoningCategory::DisjointPairs: return "disjoint_pairs";
    case ReasoningCategory::Intersection: return "intersection";
    case ReasoningCategory::Bridging: return "bridging";
  }
  return "?";
}

inline ReasoningCategory category_from_name(const std::string& s) {
  if (s == "single_pair") return ReasoningCategory::SinglePair;
  if (s == "disjoint_pairs") return ReasoningCategory::DisjointPairs;
  if (s == "intersection") return ReasoningCategory::Intersection;
  if (s == "bridging") return ReasoningCategory::Bridging;
  throw SchemaViolation("unknown category: " + s);
}

// Masked-set classifier; pairs carry their two member ids.
inline ReasoningCategory classify_category(
    const std::vector<PairKey>& pairs, const std::vector<EntityId>& masked) {
  auto in_pair = [](const PairKey& p, const EntityId& e) {
    return p.lo == e || p.hi == e;
  };
  if (pairs.size() == 1) {
    if (masked.size() == 1 && in_pair(pairs[0], masked[0]))
      return ReasoningCategory::SinglePair;
    throw InvalidMaskSet("single pair with bad mask set");
  }
  if (pairs.size() != 2) throw InvalidMaskSet("need 1 or 2 pairs");
  std::vector<EntityId> shared;
  for (const EntityId* e : {&pairs[0].lo, &pairs[0].hi})
    if (in_pair(pairs[1], *e)) shared.push_back(*e);
  if (shared.empty()) {
    if (masked.size() == 2 && in_pair(pairs[0], masked[0]) &&
        in_pair(pairs[1], masked[1]) && masked[0] != masked[1])
      return ReasoningCategory::DisjointPairs;
    if (masked.size() == 2 && in_pair(pairs[0], masked[1]) &&
        in_pair(pairs[1], masked[0]) && masked[0] != masked[1])
      return ReasoningCategory::DisjointPairs;
    throw InvalidMaskSet("disjoint pairs need one mask per pair");
  }
  if (shared.size() != 1) throw InvalidMaskSet("pairs share both entities");
  const EntityId& b = shared[0];
  bool b_masked = std::find(masked.begin(), masked.end(), b) != masked.end();
  if (!b_masked) throw InvalidMaskSet("shared entity not masked");
  if (masked.size() == 1) return ReasoningCategory::Intersection;
  if (masked.size() == 2) {
    const EntityId& other = masked[0] == b ? masked[1] : masked[0];
    if (other != b && (in_pair(pairs[0], other) || in_pair(pairs[1], other)))
      return ReasoningCategory::Bridging;
  }
  throw InvalidMaskSet("mask set matches no category");
}

// --------------------------------------------------------------------------
// Evidence sequences: tokens plus table coordinates and entity token spans.

struct EvToken {
  int id = 0;
  int row = 0;  // snippet-local, 1-based; 0 for text
  int col = 0;
};

struct EvMentionSpan {
  EntityId entity;
  int tok_start = 0;  // half-open token range within the evidence sequence
  int tok_end = 0;
  std::string surface;
};

struct EvidenceSeq {
  std::vector<EvToken> tokens;
  std::vector<EvMentionSpan> mentions;  // in token order
  std::string unit_key;

  bool contains(const EntityId& e) const {
    return std::any_of(mentions.begin(), mentions.end(),
                       [&](const EvMentionSpan& m) { return m.entity == e; });
  }
};

namespace detail {

inline void append_sentence_tokens(const Sentence& s, const Vocab& vocab,
                                   EvidenceSeq& seq) {
  std::vector<TokenSpan> toks = tokenize(s.text);
  int base = static_cast<int>(seq.tokens.size());
  for (const TokenSpan& t : toks) seq.tokens.push_back({vocab.id(t.text), 0, 0});
  for (const Mention& m : s.mentions) {
    auto [a, b] = char_range_to_tokens(toks, m.char_start, m.char_end);
    if (a == b) continue;
    seq.mentions.push_back({m.entity, base + a, base + b,
                            s.text.substr(m.char_start,
                                          m.char_end - m.char_start)});
  }
}

}  // namespace detail

// The matched sentence expanded with same-paragraph neighbours (+1, -1, +2,
// -2, ...); expansion stops the moment the next sentence would not fit, and
// a lone over-budget sentence is hard-clipped.
inline EvidenceSeq build_text_evidence(const CorpusStore& store,
                                       const EvidenceRef& ref, int budget,
                                       const Vocab& vocab) {
  const Sentence* matched = store.find_sentence(ref.sent);
  if (!matched) throw SchemaViolation("dangling sentence ref " + ref.sent.str());
  const Page& page = store.pages.at(ref.sent.page);
  const auto& par = page.paragraphs[ref.sent.paragraph];
  int n = static_cast<int>(par.size());
  int mid = ref.sent.sentence;

  auto sent_len = [&](int i) {
    return static_cast<int>(tokenize(par[i].text).size());
  };

  int total = sent_len(mid);
  std::set<int> chosen{mid};
  if (total > budget) {
    // lone sentence over budget: emit its first `budget` tokens
    EvidenceSeq seq;
    seq.unit_key = ref.unit_key();
    detail::append_sentence_tokens(*matched, vocab, seq);
    seq.tokens.resize(budget);
    seq.mentions.erase(std::remove_if(seq.mentions.begin(), seq.mentions.end(),
                                      [&](const EvMentionSpan& m) {
                                        return m.tok_end > budget;
                                      }),
                       seq.mentions.end());
    return seq;
  }
  for (int step = 1; step < n; ++step) {
    for (int cand : {mid + step, mid - step}) {
      if (cand < 0 || cand >= n || chosen.count(cand)) continue;
      int len = sent_len(cand);
      if (total + len > budget) goto done;
      total += len;
      chosen.insert(cand);
    }
  }
done:
  EvidenceSeq seq;
  seq.unit_key = ref.unit_key();
  for (int i : chosen) detail::append_sentence_tokens(par[i], vocab, seq);
  return seq;
}

// Table snippet: column 0 plus the pair's columns plus random extras (at
// most snippet_columns_max non-first columns), header row plus the evidence
// row plus following rows while the budget allows. Cells are truncated to
// cell_max tokens and carry 1-based snippet-local (row, col).
inline EvidenceSeq build_table_snippet(const CorpusStore& store,
                                       const EvidenceRef& ref, int budget,
                                       const BudgetConfig& cfg, Rng& rng,
                                       const Vocab& vocab) {
  const Table* table = store.find_table(ref.table);
  if (!table) throw SchemaViolation("dangling table ref " + ref.table.str());
  int ncols = table->n_cols();
  int nrows = table->n_rows();
  if (ref.row < 0 || ref.row >= nrows)
    throw SchemaViolation("evidence row out of range");

  std::set<int> required{0};
  if (ref.lo_at.col >= 0) required.insert(ref.lo_at.col);
  if (ref.hi_at.col >= 0) required.insert(ref.hi_at.col);

  auto non_first = [](const std::set<int>& cols) {
    return static_cast<int>(cols.size()) - (cols.count(0) ? 1 : 0);
  };

  // cache truncated-cell token counts lazily
  auto cell_tokens = [&](int r, int c) {
    auto ids = tokenize(table->rows[r][c].text);
    if (static_cast<int>(ids.size()) > cfg.cell_max) ids.resize(cfg.cell_max);
    return ids;
  };
  auto row_cost = [&](int r, const std::set<int>& cols) {
    int cost = 0;
    for (int c : cols) cost += static_cast<int>(cell_tokens(r, c).size());
    return cost;
  };

  std::set<int> cols = required;
  // random extra columns up to the cap
  std::vector<int> extras;
  for (int c = 0; c < ncols; ++c)
    if (!cols.count(c)) extras.push_back(c);
  rng.shuffle(extras);
  for (int c : extras) {
    if (non_first(cols) >= cfg.snippet_columns_max) break;
    cols.insert(c);
  }

  auto base_cost = [&](const std::set<int>& cs) {
    int cost = row_cost(0, cs);
    if (ref.row != 0) cost += row_cost(ref.row, cs);
    return cost;
  };
  if (base_cost(cols) > budget) {
    cols = required;  // drop extras before giving up
    if (base_cost(cols) > budget)
      throw SnippetInfeasible(ref.table.str() + " row " +
                              std::to_string(ref.row));
  }

  std::vector<int> rows{0};
  int total = base_cost(cols);
  if (ref.row != 0) rows.push_back(ref.row);
  for (int r = ref.row + 1; r < nrows; ++r) {
    if (static_cast<int>(rows.size()) >= cfg.snippet_rows_max) break;
    int cost = row_cost(r, cols);
    if (total + cost > budget) break;
    total += cost;
    rows.push_back(r);
  }

  // row-major serialization with snippet-local coordinates starting at 1
  EvidenceSeq seq;
  seq.unit_key = ref.unit_key();
  int local_r = 0;
  for (int r : rows) {
    ++local_r;
    int local_c = 0;
    for (int c : cols) {
      ++local_c;
      const Cell& cell = table->rows[r][c];
      std::vector<TokenSpan> toks = tokenize(cell.text);
      int keep = std::min<int>(static_cast<int>(toks.size()), cfg.cell_max);
      int base = static_cast<int>(seq.tokens.size());
      for (int i = 0; i < keep; ++i)
        seq.tokens.push_back({vocab.id(toks[i].text), local_r, local_c});
      // mentions surviving truncation
      for (const Mention& m : cell.mentions) {
        auto [a, b] = char_range_to_tokens(toks, m.char_start, m.char_end);
        if (a == b || b > keep) continue;
        seq.mentions.push_back({m.entity, base + a, base + b,
                                cell.text.substr(m.char_start,
                                                 m.char_end - m.char_start)});
      }
    }
  }
  return seq;
}

// --------------------------------------------------------------------------
// Assembled example

struct QuestionSlot {
  int question_pos = 0;      // sequence index of the loss-bearing [QUESTION]
  bool answerable = true;
  int target_start = 0;      // inclusive sequence positions; 0/0 for [CLS]
  int target_end = 0;
  EntityId masked_entity;
  std::string gold_surface;  // evidence surface of the gold span ("" for CLS)
};

struct MlmTarget {
  int pos = 0;
  int original_id = 0;
};

struct PretrainExample {
  std::vector<int> token_ids;
  std::vector<int> segment;  // 0 query side, 1 evidence side
  std::vector<int> row, col; // snippet-local, 0 outside tables
  std::vector<QuestionSlot> slots;
  std::vector<MlmTarget> mlm_targets;
  ReasoningCategory category = ReasoningCategory::SinglePair;
  std::vector<std::pair<int, int>> entity_spans;  // half-open, final positions
  // provenance
  std::string query_locator;
  std::vector<std::string> evidence_units;
  uint64_t seed = 0;

  int length() const { return static_cast<int>(token_ids.size()); }
  int evidence_begin() const {
    for (int i = 0; i < length(); ++i)
      if (segment[i] == 1) return i;
    return length();
  }
  bool is_special(int i) const { return token_ids[i] < kFirstRegularId; }
};

struct GenOptions {
  bool mlm = true;
  bool unanswerable = true;
  bool single_evidence = false;
  double mlm_rate = 0.15;
  double intersection_prob = 0.5;  // coin between intersection and bridging
};

// --------------------------------------------------------------------------

namespace detail {

struct QueryView {
  std::vector<TokenSpan> tokens;           // clipped to query_max
  std::vector<std::pair<Mention, std::pair<int, int>>> mentions;  // tok spans
};

inline QueryView clip_query(const Sentence& s, int query_max) {
  QueryView qv;
  qv.tokens = tokenize(s.text);
  if (static_cast<int>(qv.tokens.size()) > query_max)
    qv.tokens.resize(query_max);
  for (const Mention& m : s.mentions) {
    auto [a, b] = char_range_to_tokens(qv.tokens, m.char_start, m.char_end);
    if (a == b) continue;
    qv.mentions.push_back({m, {a, b}});
  }
  return qv;
}

inline std::optional<EntityId> other_member(const PairKey& p,
                                            const EntityId& e) {
  if (p.lo == e) return p.hi;
  if (p.hi == e) return p.lo;
  return std::nullopt;
}

inline std::vector<EntityId> shared_entities(const PairKey& a,
                                             const PairKey& b) {
  std::vector<EntityId> out;
  for (const EntityId* e : {&a.lo, &a.hi})
    if (b.lo == *e || b.hi == *e) out.push_back(*e);
  return out;
}

}  // namespace detail

// One fully assembled pre-training example for a query group, or
// NoViableExample when no sampled masking yields an answerable slot set.
inline PretrainExample sample_example(const CorpusStore& store,
                                      const QueryGroup& group, uint64_t seed,
                                      const BudgetConfig& cfg, Profile profile,
                                      const Vocab& vocab,
                                      const GenOptions& opt = {},
                                      uint64_t epoch = 0) {
  const Sentence* query = store.find_sentence(group.query);
  if (!query) throw SchemaViolation("dangling query " + group.query.str());

  uint64_t base = fnv1a(group.query.str());
  base = hash_combine(base, epoch);
  base = hash_combine(base, seed);
  Rng rng(base);

  const int kAttempts = 32;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    // --- sample pairs
    std::vector<int> pick;
    int npairs = static_cast<int>(group.pairs.size());
    if (opt.single_evidence || npairs == 1) {
      pick = {static_cast<int>(rng.uniform(npairs))};
    } else {
      int i = static_cast<int>(rng.uniform(npairs));
      int j = static_cast<int>(rng.uniform(npairs - 1));
      if (j >= i) ++j;
      pick = {i, j};
    }

    // --- sample one evidence per pair; hybrid needs >=1 table piece
    std::vector<EvidenceRef> refs;
    for (int p : pick) {
      const auto& cands = group.pairs[p].candidates;
      refs.push_back(cands[rng.uniform(cands.size())]);
    }
    if (profile == Profile::Hybrid) {
      bool has_table = std::any_of(refs.begin(), refs.end(),
                                   [](const EvidenceRef& r) {
                                     return r.kind == EvidenceKind::Table;
                                   });
      if (!has_table) {
        // retarget one pick that has table candidates, if any
        bool fixed = false;
        for (size_t k = 0; k < pick.size() && !fixed; ++k) {
          std::vector<EvidenceRef> tables;
          for (const EvidenceRef& r : group.pairs[pick[k]].candidates)
            if (r.kind == EvidenceKind::Table) tables.push_back(r);
          if (!tables.empty()) {
            refs[k] = tables[rng.uniform(tables.size())];
            fixed = true;
          }
        }
        if (!fixed) continue;  // this sampling cannot satisfy hybrid
      }
    }

    // --- choose masked entities by category rules
    std::vector<PairKey> pairs;
    for (int p : pick) pairs.push_back(group.pairs[p].pair);
    std::vector<EntityId> masked;           // one per pair-slot
    std::vector<int> masked_evidence_idx;   // which piece answers which mask
    ReasoningCategory category;
    if (pairs.size() == 1) {
      category = ReasoningCategory::SinglePair;
      masked.push_back(rng.coin() ? pairs[0].lo : pairs[0].hi);
      masked_evidence_idx.push_back(0);
    } else {
      std::vector<EntityId> shared = detail::shared_entities(pairs[0], pairs[1]);
      if (shared.empty()) {
        category = ReasoningCategory::DisjointPairs;
        for (int k = 0; k < 2; ++k) {
          masked.push_back(rng.coin() ? pairs[k].lo : pairs[k].hi);
          masked_evidence_idx.push_back(k);
        }
      } else if (shared.size() == 1) {
        const EntityId& b = shared[0];
        bool intersection = rng.uniform_real() < opt.intersection_prob;
        if (intersection) {
          category = ReasoningCategory::Intersection;
          masked.push_back(b);
          masked_evidence_idx.push_back(0);  // b occurs in both; use piece 0
        } else {
          category = ReasoningCategory::Bridging;
          int other_pair = rng.coin() ? 0 : 1;
          EntityId c = *detail::other_member(pairs[other_pair], b);
          masked.push_back(b);
          masked_evidence_idx.push_back(other_pair == 0 ? 1 : 0);
          masked.push_back(c);
          masked_evidence_idx.push_back(other_pair);
        }
      } else {
        continue;  // degenerate: identical pair sampled twice
      }
    }
    // distinct masked entities required
    if (masked.size() == 2 && masked[0] == masked[1]) continue;

    // --- build evidence sequences
    int budget = refs.size() == 2 ? cfg.evidence_max_two : cfg.evidence_max_one;
    std::vector<EvidenceSeq> seqs;
    bool feasible = true;
    for (const EvidenceRef& r : refs) {
      try {
        seqs.push_back(r.kind == EvidenceKind::Text
                           ? build_text_evidence(store, r, budget, vocab)
                           : build_table_snippet(store, r, budget, cfg, rng,
                                                 vocab));
      } catch (const SnippetInfeasible&) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;

    // every pair-slot entity must survive truncation somewhere in evidence
    bool all_present = true;
    for (const EntityId& e : masked) {
      bool present = std::any_of(seqs.begin(), seqs.end(),
                                 [&](const EvidenceSeq& s) {
                                   return s.contains(e);
                                 });
      if (!present) all_present = false;
    }
    if (!all_present) continue;

    // --- evidence order randomized
    std::vector<int> order(seqs.size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    rng.shuffle(order);

    // --- query masking
    detail::QueryView qview = detail::clip_query(*query, cfg.query_max);
    auto query_has = [&](const EntityId& e) {
      return std::any_of(qview.mentions.begin(), qview.mentions.end(),
                         [&](const auto& m) { return m.first.entity == e; });
    };
    bool clipped_away = false;
    for (const EntityId& e : masked)
      if (!query_has(e)) clipped_away = true;
    if (clipped_away) continue;

    // optional unanswerable mask: a query entity absent from all evidence
    std::optional<EntityId> cls_entity;
    if (opt.unanswerable && masked.size() < 3) {
      std::vector<EntityId> absent;
      for (const auto& [m, span] : qview.mentions) {
        if (std::find(masked.begin(), masked.end(), m.entity) != masked.end())
          continue;
        if (std::find(absent.begin(), absent.end(), m.entity) != absent.end())
          continue;
        bool in_ev = std::any_of(seqs.begin(), seqs.end(),
                                 [&](const EvidenceSeq& s) {
                                   return s.contains(m.entity);
                                 });
        if (!in_ev) absent.push_back(m.entity);
      }
      if (!absent.empty())
        cls_entity = absent[rng.uniform(absent.size())];
    }

    std::vector<EntityId> all_masked = masked;
    if (cls_entity) all_masked.push_back(*cls_entity);

    // replace every query mention of each masked entity with [QUESTION]
    struct QTok {
      int id;
      int mention_of = -1;  // index into all_masked for [QUESTION] tokens
    };
    std::vector<QTok> qtoks;
    std::vector<std::pair<int, int>> q_entity_spans;  // surviving mentions
    {
      // mark masked token ranges
      std::vector<int> owner(qview.tokens.size(), -1);
      std::vector<char> is_start(qview.tokens.size(), 0);
      for (const auto& [m, span] : qview.mentions) {
        auto it = std::find(all_masked.begin(), all_masked.end(), m.entity);
        if (it == all_masked.end()) continue;
        int mi = static_cast<int>(it - all_masked.begin());
        bool overlap_prev = false;
        for (int t = span.first; t < span.second; ++t)
          if (owner[t] != -1) overlap_prev = true;
        if (overlap_prev) continue;
        for (int t = span.first; t < span.second; ++t) owner[t] = mi;
        is_start[span.first] = 1;
      }
      for (size_t t = 0; t < qview.tokens.size(); ++t) {
        if (owner[t] == -1) {
          qtoks.push_back({vocab.id(qview.tokens[t].text), -1});
        } else if (is_start[t]) {
          qtoks.push_back({kQuestion, owner[t]});
        }  // non-start masked tokens vanish
      }
      // unmasked mention spans in the compacted query, for MLM exclusion
      std::vector<int> new_pos(qview.tokens.size(), -1);
      {
        int np = 0;
        for (size_t t = 0; t < qview.tokens.size(); ++t) {
          if (owner[t] == -1 || is_start[t]) new_pos[t] = np++;
        }
      }
      for (const auto& [m, span] : qview.mentions) {
        if (std::find(all_masked.begin(), all_masked.end(), m.entity) !=
            all_masked.end())
          continue;
        if (new_pos[span.first] < 0) continue;
        bool contiguous = true;
        for (int t = span.first; t < span.second; ++t)
          if (new_pos[t] < 0) contiguous = false;
        if (contiguous)
          q_entity_spans.push_back({new_pos[span.first],
                                    new_pos[span.second - 1] + 1});
      }
    }

    // --- assemble final sequence
    PretrainExample ex;
    ex.category = category;
    ex.seed = seed;
    ex.query_locator = group.query.str();
    auto push = [&](int id, int seg, int r, int c) {
      ex.token_ids.push_back(id);
      ex.segment.push_back(seg);
      ex.row.push_back(r);
      ex.col.push_back(c);
    };
    push(kCls, 0, 0, 0);
    std::vector<int> question_pos(all_masked.size(), -1);  // first occurrence
    for (const QTok& t : qtoks) {
      int pos = ex.length();
      push(t.id, 0, 0, 0);
      if (t.mention_of >= 0 && question_pos[t.mention_of] < 0)
        question_pos[t.mention_of] = pos;
    }
    for (auto& [a, b] : q_entity_spans) ex.entity_spans.push_back({a + 1, b + 1});
    push(kSep, 0, 0, 0);

    std::vector<EvMentionSpan> ev_mentions;  // final-sequence coordinates
    for (int oi : order) {
      const EvidenceSeq& s = seqs[oi];
      int base2 = ex.length();
      for (const EvToken& t : s.tokens) push(t.id, 1, t.row, t.col);
      for (const EvMentionSpan& m : s.mentions) {
        EvMentionSpan shifted = m;
        shifted.tok_start += base2;
        shifted.tok_end += base2;
        ev_mentions.push_back(shifted);
        ex.entity_spans.push_back({shifted.tok_start, shifted.tok_end});
      }
      if (oi != order.back()) push(kSep, 1, 0, 0);
      ex.evidence_units.push_back(s.unit_key);
    }
    std::sort(ev_mentions.begin(), ev_mentions.end(),
              [](const EvMentionSpan& a, const EvMentionSpan& b) {
                return a.tok_start < b.tok_start;
              });

    if (ex.length() > cfg.total_max) continue;  // cannot happen with defaults

    // --- slots
    bool ok = true;
    for (size_t k = 0; k < all_masked.size() && ok; ++k) {
      QuestionSlot slot;
      slot.masked_entity = all_masked[k];
      slot.question_pos = question_pos[k];
      if (slot.question_pos < 0) {
        ok = false;  // overlapping masked mentions ate the slot position
        break;
      }
      if (cls_entity && k == all_masked.size() - 1 &&
          all_masked[k] == *cls_entity) {
        slot.answerable = false;
        slot.target_start = slot.target_end = 0;
      } else {
        auto it = std::find_if(ev_mentions.begin(), ev_mentions.end(),
                               [&](const EvMentionSpan& m) {
                                 return m.entity == all_masked[k];
                               });
        if (it == ev_mentions.end()) {
          ok = false;
          break;
        }
        slot.answerable = true;
        slot.target_start = it->tok_start;
        slot.target_end = it->tok_end - 1;
        slot.gold_surface = it->surface;
      }
      ex.slots.push_back(std::move(slot));
    }
    if (!ok || ex.slots.empty()) continue;
    bool any_answerable = std::any_of(ex.slots.begin(), ex.slots.end(),
                                      [](const QuestionSlot& s) {
                                        return s.answerable;
                                      });
    if (!any_answerable) continue;

    return ex;
  }
  throw NoViableExample(group.query.str());
}

// --------------------------------------------------------------------------
// MLM target selection: eligible tokens are non-special, outside every
// entity mention, and outside table header rows (snippet row 1).

inline void apply_mlm(PretrainExample& ex, Rng& rng, const Vocab& vocab,
                      double rate = 0.15) {
  ex.mlm_targets.clear();
  std::vector<char> in_entity(ex.length(), 0);
  for (auto& [a, b] : ex.entity_spans)
    for (int i = a; i < b && i < ex.length(); ++i) in_entity[i] = 1;
  int regular = vocab.size() - kFirstRegularId;
  for (int i = 0; i < ex.length(); ++i) {
    if (ex.is_special(i) || in_entity[i] || ex.row[i] == 1) continue;
    if (rng.uniform_real() >= rate) continue;
    MlmTarget t{i, ex.token_ids[i]};
    double r = rng.uniform_real();
    if (r < 0.8) {
      ex.token_ids[i] = kMask;
    } else if (r < 0.9 && regular > 0) {
      ex.token_ids[i] = kFirstRegularId + static_cast<int>(rng.uniform(regular));
    }  // else unchanged
    ex.mlm_targets.push_back(t);
  }
}

// --------------------------------------------------------------------------
// JSONL round trip

inline json to_json(const PretrainExample& ex) {
  json jslots = json::array();
  for (const QuestionSlot& s : ex.slots)
    jslots.push_back(json{{"question_pos", s.question_pos},
                          {"answerable", s.answerable},
                          {"start", s.target_start},
                          {"end", s.target_end},
                          {"entity", s.masked_entity.canon},
                          {"surface", s.gold_surface}});
  json jmlm = json::array();
  for (const MlmTarget& t : ex.mlm_targets)
    jmlm.push_back(json{{"pos", t.pos}, {"orig", t.original_id}});
  json jspans = json::array();
  for (auto& [a, b] : ex.entity_spans) jspans.push_back(json::array({a, b}));
  return json{{"token_ids", ex.token_ids},
              {"segment", ex.segment},
              {"row", ex.row},
              {"col", ex.col},
              {"slots", jslots},
              {"mlm", jmlm},
              {"category", category_name(ex.category)},
              {"entity_spans", jspans},
              {"provenance", json{{"query", ex.query_locator},
                                  {"evidence", ex.evidence_units},
                                  {"seed", ex.seed}}}};
}

inline PretrainExample example_from_json(const json& j) {
  for (const char* field : {"token_ids", "segment", "row", "col", "slots",
                            "mlm", "category", "entity_spans", "provenance"})
    if (!j.contains(field))
      throw SchemaViolation(std::string("missing field: ") + field);
  PretrainExample ex;
  ex.token_ids = j.at("token_ids").get<std::vector<int>>();
  ex.segment = j.at("segment").get<std::vector<int>>();
  ex.row = j.at("row").get<std::vector<int>>();
  ex.col = j.at("col").get<std::vector<int>>();
  if (ex.segment.size() != ex.token_ids.size() ||
      ex.row.size() != ex.token_ids.size() ||
      ex.col.size() != ex.token_ids.size())
    throw SchemaViolation("ragged parallel arrays");
  for (const json& js : j.at("slots")) {
    QuestionSlot s;
    s.question_pos = js.at("question_pos").get<int>();
    s.answerable = js.at("answerable").get<bool>();
    s.target_start = js.at("start").get<int>();
    s.target_end = js.at("end").get<int>();
    s.masked_entity = EntityId::parse(js.at("entity").get<std::string>());
    s.gold_surface = js.at("surface").get<std::string>();
    ex.slots.push_back(std::move(s));
  }
  for (const json& jt : j.at("mlm"))
    ex.mlm_targets.push_back({jt.at("pos").get<int>(),
                              jt.at("orig").get<int>()});
  ex.category = category_from_name(j.at("category").get<std::string>());
  for (const json& jsp : j.at("entity_spans"))
    ex.entity_spans.push_back({jsp.at(0).get<int>(), jsp.at(1).get<int>()});
  ex.query_locator = j.at("provenance").at("query").get<std::string>();
  ex.evidence_units =
      j.at("provenance").at("evidence").get<std::vector<std::string>>();
  ex.seed = j.at("provenance").at("seed").get<uint64_t>();
  return ex;
}

inline std::string serialize(const PretrainExample& ex) {
  return to_json(ex).dump();
}

inline PretrainExample deserialize_example(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw SchemaViolation(e.what());
  }
  return example_from_json(j);
}

}  // namespace spanforge
