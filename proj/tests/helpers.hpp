#pragma once

// Shared test fixtures: the bundled mini corpus, hand-built corpora and
// random synthetic corpora for oracle comparisons.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spanforge/example_gen.hpp"
#include "spanforge/ingest.hpp"
#include "spanforge/pair_index.hpp"

#ifndef SPANFORGE_SOURCE_DIR
#define SPANFORGE_SOURCE_DIR "."
#endif

namespace testutil {

using namespace spanforge;

inline std::string data_path(const std::string& rel) {
  return std::string(SPANFORGE_SOURCE_DIR) + "/" + rel;
}

inline CorpusStore& mini_store() {
  static CorpusStore store = [] {
    std::ifstream is(data_path("data/mini_corpus.jsonl"));
    REQUIRE(is.good());
    CorpusStore s = parse_corpus(is);
    enrich_store(s, 4);
    return s;
  }();
  return store;
}

inline const Vocab& mini_vocab() {
  static Vocab v = build_vocab(mini_store());
  return v;
}

// Parses a corpus from JSONL text and enriches it.
inline CorpusStore corpus_from_lines(const std::string& jsonl,
                                     unsigned threads = 1) {
  std::istringstream is(jsonl);
  CorpusStore store = parse_corpus(is);
  enrich_store(store, threads);
  return store;
}

// Random small corpus: a handful of pages with random cross links, sentences
// over a shared entity pool, and occasional small tables with linked cells.
inline std::string random_corpus_jsonl(Rng& rng) {
  int n_pages = 3 + static_cast<int>(rng.uniform(6));
  std::vector<std::string> ids;
  for (int p = 0; p < n_pages; ++p) ids.push_back("pg" + std::to_string(p));

  json lines = json::array();
  for (int p = 0; p < n_pages; ++p) {
    json paragraphs = json::array();
    int n_par = 1 + static_cast<int>(rng.uniform(2));
    for (int par = 0; par < n_par; ++par) {
      json sentences = json::array();
      int n_sent = 1 + static_cast<int>(rng.uniform(5));
      for (int s = 0; s < n_sent; ++s) {
        std::string text;
        json links = json::array();
        int n_ment = static_cast<int>(rng.uniform(4));
        text += "w" + std::to_string(rng.uniform(20)) + " ";
        for (int m = 0; m < n_ment; ++m) {
          const std::string& target = ids[rng.uniform(ids.size())];
          size_t start = text.size();
          text += target;
          links.push_back(json{{"start", start},
                               {"end", text.size()},
                               {"target", target}});
          text += " w" + std::to_string(rng.uniform(20)) + " ";
        }
        if (rng.coin()) text += "in " + std::to_string(1900 + rng.uniform(100));
        sentences.push_back(json{{"text", text}, {"links", links}});
      }
      paragraphs.push_back(sentences);
    }
    json tables = json::array();
    if (rng.uniform(3) == 0) {
      int rows = 2 + static_cast<int>(rng.uniform(3));
      int cols = 2 + static_cast<int>(rng.uniform(2));
      json jrows = json::array();
      for (int r = 0; r < rows; ++r) {
        json jrow = json::array();
        for (int c = 0; c < cols; ++c) {
          if (r > 0 && rng.coin()) {
            const std::string& target = ids[rng.uniform(ids.size())];
            json lk = json::array();
            lk.push_back(json{{"start", 0},
                              {"end", target.size()},
                              {"target", target}});
            jrow.push_back(json{{"text", target}, {"links", lk}});
          } else {
            jrow.push_back(json{
                {"text", "h" + std::to_string(r) + std::to_string(c)},
                {"links", json::array()}});
          }
        }
        jrows.push_back(jrow);
      }
      tables.push_back(json{{"caption", "tbl"}, {"rows", jrows}});
    }
    lines.push_back(json{{"id", ids[p]},
                         {"title", "Page " + std::to_string(p)},
                         {"aliases", json::array({"Page " + std::to_string(p)})},
                         {"paragraphs", paragraphs},
                         {"tables", tables}});
  }
  std::string out;
  for (const json& l : lines) out += l.dump() + "\n";
  return out;
}

// Generates examples over the mini corpus; cached per (profile, options).
inline std::vector<PretrainExample> gen_examples(Profile profile,
                                                 const GenOptions& opt,
                                                 uint64_t seed = 0,
                                                 int per_group = 3) {
  CorpusStore& store = mini_store();
  PairIndex index = build_index(store);
  std::vector<QueryGroup> groups =
      build_query_groups(store, index, profile, 4);
  const Vocab& vocab = mini_vocab();
  BudgetConfig cfg;
  std::vector<PretrainExample> out;
  for (const QueryGroup& g : groups) {
    for (int epoch = 0; epoch < per_group; ++epoch) {
      try {
        PretrainExample ex =
            sample_example(store, g, seed, cfg, profile, vocab, opt, epoch);
        if (opt.mlm) {
          uint64_t h = hash_combine(fnv1a("mlm"), fnv1a(ex.query_locator));
          Rng rng(hash_combine(h, hash_combine(seed, (uint64_t)epoch)));
          apply_mlm(ex, rng, vocab, opt.mlm_rate);
        }
        out.push_back(std::move(ex));
      } catch (const NoViableExample&) {
      }
    }
  }
  return out;
}

}  // namespace testutil
