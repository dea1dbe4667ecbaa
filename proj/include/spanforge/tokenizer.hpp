#pragma once

// Whitespace/punctuation tokenizer with byte-offset alignment, and the
// corpus-derived vocabulary. Reserved ids 0..5 in fixed order.

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spanforge/ingest.hpp"

namespace spanforge {

constexpr int kPad = 0;
constexpr int kCls = 1;
constexpr int kSep = 2;
constexpr int kQuestion = 3;
constexpr int kMask = 4;
constexpr int kUnk = 5;
constexpr int kFirstRegularId = 6;

inline const char* special_token_name(int id) {
  static const char* names[] = {"[PAD]", "[CLS]", "[SEP]",
                                "[QUESTION]", "[MASK]", "[UNK]"};
  return id >= 0 && id < 6 ? names[id] : "?";
}

struct TokenSpan {
  std::string text;  // lowercased surface
  size_t char_start = 0;
  size_t char_end = 0;
};

namespace detail {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}
inline bool is_ascii_punct(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return u < 128 && std::ispunct(u);
}
inline char ascii_lower(char c) {
  return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace detail

// Lowercases ASCII, splits on whitespace, emits ASCII punctuation marks as
// single-character tokens. Multibyte UTF-8 stays inside word tokens.
inline std::vector<TokenSpan> tokenize(const std::string& text) {
  std::vector<TokenSpan> out;
  size_t i = 0;
  while (i < text.size()) {
    if (detail::is_ascii_space(text[i])) {
      ++i;
      continue;
    }
    if (detail::is_ascii_punct(text[i])) {
      out.push_back({std::string(1, detail::ascii_lower(text[i])), i, i + 1});
      ++i;
      continue;
    }
    size_t start = i;
    std::string tok;
    while (i < text.size() && !detail::is_ascii_space(text[i]) &&
           !detail::is_ascii_punct(text[i])) {
      tok.push_back(detail::ascii_lower(text[i]));
      ++i;
    }
    out.push_back({std::move(tok), start, i});
  }
  return out;
}

class Vocab {
 public:
  Vocab() {
    for (int id = 0; id < kFirstRegularId; ++id)
      add(special_token_name(id));
  }

  explicit Vocab(const std::vector<std::string>& tokens) : Vocab() {
    for (const std::string& t : tokens)
      if (!str_to_id_.count(t)) add(t);
  }

  int id(const std::string& tok) const {
    auto it = str_to_id_.find(tok);
    return it == str_to_id_.end() ? kUnk : it->second;
  }
  const std::string& str(int id) const { return id_to_str_.at(id); }
  int size() const { return static_cast<int>(id_to_str_.size()); }

  const std::vector<std::string>& all() const { return id_to_str_; }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    for (const TokenSpan& t : tokenize(text)) ids.push_back(id(t.text));
    return ids;
  }

 private:
  void add(const std::string& t) {
    str_to_id_.emplace(t, static_cast<int>(id_to_str_.size()));
    id_to_str_.push_back(t);
  }
  std::map<std::string, int> str_to_id_;
  std::vector<std::string> id_to_str_;
};

// Vocabulary over every sentence, cell and caption of the store; token
// strings sorted so the mapping is a pure function of corpus content.
inline Vocab build_vocab(const CorpusStore& store) {
  std::set<std::string> words;
  auto grab = [&](const std::string& text) {
    for (const TokenSpan& t : tokenize(text)) words.insert(t.text);
  };
  for (const auto& [id, page] : store.pages) {
    for (const auto& par : page.paragraphs)
      for (const Sentence& s : par) grab(s.text);
    for (const Table& t : page.tables) {
      grab(t.caption);
      for (const auto& row : t.rows)
        for (const Cell& c : row) grab(c.text);
    }
  }
  return Vocab(std::vector<std::string>(words.begin(), words.end()));
}

// Token span [first, last) covering a byte range; empty when no overlap.
inline std::pair<int, int> char_range_to_tokens(
    const std::vector<TokenSpan>& tokens, size_t cs, size_t ce) {
  int first = -1, last = -1;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    if (tokens[i].char_start < ce && cs < tokens[i].char_end) {
      if (first < 0) first = i;
      last = i + 1;
    }
  }
  if (first < 0) return {0, 0};
  return {first, last};
}

}  // namespace spanforge
