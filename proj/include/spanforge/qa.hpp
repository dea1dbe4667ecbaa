#pragma once

// Extractive-QA evaluation harness: answer normalization and EM/F1, evidence
// windowing, multi-hop evidence combination, hybrid table+passage
// composition, few-shot subsetting, and the end-to-end evaluate loop over a
// pluggable span scorer.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spanforge/model.hpp"
#include "spanforge/params_io.hpp"
#include "spanforge/tokenizer.hpp"

namespace spanforge {

// --------------------------------------------------------------------------
// Dataset types

struct QADocument {
  std::string article_id;
  std::string text;
};

struct QATable {
  std::vector<std::vector<std::string>> rows;  // rows[0] = header
  int linked_row = -1;  // cell whose passage is attached (hybrid mode)
  int linked_col = -1;
  std::string linked_passage;
};

struct QAExample {
  std::string id;
  std::string question;
  std::vector<QADocument> documents;
  std::vector<QATable> tables;
  std::vector<std::string> gold_answers;
  bool answerable = true;
};

struct MetricReport {
  double em = 0.0;
  double f1 = 0.0;
  int n = 0;
};

inline QAExample qa_example_from_json(const json& j) {
  QAExample ex;
  ex.id = j.at("id").get<std::string>();
  ex.question = j.at("question").get<std::string>();
  if (j.contains("documents"))
    for (const json& jd : j.at("documents"))
      ex.documents.push_back({jd.at("article_id").get<std::string>(),
                              jd.at("text").get<std::string>()});
  if (j.contains("tables"))
    for (const json& jt : j.at("tables")) {
      QATable t;
      t.rows = jt.at("rows").get<std::vector<std::vector<std::string>>>();
      if (jt.contains("linked_row")) t.linked_row = jt.at("linked_row").get<int>();
      if (jt.contains("linked_col")) t.linked_col = jt.at("linked_col").get<int>();
      if (jt.contains("linked_passage"))
        t.linked_passage = jt.at("linked_passage").get<std::string>();
      ex.tables.push_back(std::move(t));
    }
  ex.gold_answers = j.contains("answers")
                        ? j.at("answers").get<std::vector<std::string>>()
                        : std::vector<std::string>{};
  ex.answerable = j.contains("answerable") ? j.at("answerable").get<bool>()
                                           : !ex.gold_answers.empty();
  if (ex.answerable == ex.gold_answers.empty())
    throw SchemaViolation("gold answers must be non-empty iff answerable: " +
                          ex.id);
  return ex;
}

inline json qa_example_to_json(const QAExample& ex) {
  json jd = json::array();
  for (const QADocument& d : ex.documents)
    jd.push_back(json{{"article_id", d.article_id}, {"text", d.text}});
  json jt = json::array();
  for (const QATable& t : ex.tables) {
    json e{{"rows", t.rows}};
    if (t.linked_row >= 0) {
      e["linked_row"] = t.linked_row;
      e["linked_col"] = t.linked_col;
      e["linked_passage"] = t.linked_passage;
    }
    jt.push_back(std::move(e));
  }
  return json{{"id", ex.id},
              {"question", ex.question},
              {"documents", jd},
              {"tables", jt},
              {"answers", ex.gold_answers},
              {"answerable", ex.answerable}};
}

// --------------------------------------------------------------------------
// Metrics

// lowercase, strip punctuation, drop articles a/an/the, collapse whitespace
inline std::string normalize_answer(const std::string& text) {
  std::string kept;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u < 128 && std::ispunct(u)) continue;
    kept.push_back(detail::ascii_lower(c));
  }
  std::vector<std::string> words;
  std::string cur;
  for (char c : kept) {
    if (detail::is_ascii_space(c)) {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  std::string out;
  for (const std::string& w : words) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

namespace detail {

inline std::vector<std::string> norm_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : normalize_answer(s)) {
    if (c == ' ') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double bag_f1(const std::vector<std::string>& pred,
                     const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
  std::map<std::string, int> counts;
  for (const std::string& t : gold) ++counts[t];
  int common = 0;
  for (const std::string& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  double precision = static_cast<double>(common) / pred.size();
  double recall = static_cast<double>(common) / gold.size();
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace detail

// Per-example metrics; a null prediction is the CLS/no-answer outcome.
inline std::pair<double, double> em_f1(
    const std::optional<std::string>& prediction,
    const std::vector<std::string>& golds, bool answerable = true) {
  if (!answerable) return prediction ? std::make_pair(0.0, 0.0)
                                     : std::make_pair(1.0, 1.0);
  if (!prediction) return {0.0, 0.0};
  std::string p = normalize_answer(*prediction);
  std::vector<std::string> pt = detail::norm_tokens(*prediction);
  double em = 0.0, f1 = 0.0;
  for (const std::string& g : golds) {
    if (p == normalize_answer(g)) em = 1.0;
    f1 = std::max(f1, detail::bag_f1(pt, detail::norm_tokens(g)));
  }
  return {em, f1};
}

// --------------------------------------------------------------------------
// Windowing and multi-hop combination

struct Window {
  std::string article_id;
  int start = 0, end = 0;               // token range within the article
  std::vector<std::string> tokens;      // surface tokens of the window
};

// Half-open [start, start+window) ranges at stride offsets; stops with the
// first window that contains the final token.
inline std::vector<std::pair<int, int>> window_split(int n_tokens,
                                                     int window = 200,
                                                     int stride = 128) {
  if (window <= stride || stride <= 0)
    throw ShapeMismatch("window must exceed stride > 0");
  std::vector<std::pair<int, int>> out;
  int start = 0;
  while (true) {
    int end = std::min(start + window, n_tokens);
    out.push_back({start, end});
    if (end >= n_tokens) break;
    start += stride;
  }
  return out;
}

inline std::vector<Window> split_document(const QADocument& doc, int window,
                                          int stride) {
  std::vector<TokenSpan> toks = tokenize(doc.text);
  std::vector<Window> out;
  for (auto [a, b] : window_split(static_cast<int>(toks.size()), window,
                                  stride)) {
    Window w{doc.article_id, a, b, {}};
    for (int i = a; i < b; ++i) w.tokens.push_back(toks[i].text);
    out.push_back(std::move(w));
  }
  return out;
}

using WindowScorer = std::function<double(const std::string& question,
                                          const Window& window)>;

// Top-k by score; ties broken by (article id, window start).
inline std::vector<Window> select_topk(const std::string& question,
                                       const std::vector<Window>& windows,
                                       const WindowScorer& scorer, int k = 3) {
  std::vector<std::pair<double, int>> scored;
  for (size_t i = 0; i < windows.size(); ++i)
    scored.push_back({scorer(question, windows[i]), static_cast<int>(i)});
  std::stable_sort(scored.begin(), scored.end(),
                   [&](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first > b.first;
                     const Window& wa = windows[a.second];
                     const Window& wb = windows[b.second];
                     if (wa.article_id != wb.article_id)
                       return wa.article_id < wb.article_id;
                     return wa.start < wb.start;
                   });
  std::vector<Window> out;
  for (int i = 0; i < std::min<int>(k, scored.size()); ++i)
    out.push_back(windows[scored[i].second]);
  return out;
}

struct CombinedEvidence {
  int first = 0, second = 0;            // selection-rank indices
  std::vector<std::string> tokens;      // w_first ++ [SEP] ++ w_second
};

// All unordered cross-article pairs of the selected windows, concatenated in
// selection-rank order with a separator.
inline std::vector<CombinedEvidence> hotpot_combine(
    const std::vector<Window>& selected) {
  std::vector<CombinedEvidence> out;
  for (size_t i = 0; i < selected.size(); ++i)
    for (size_t j = i + 1; j < selected.size(); ++j) {
      if (selected[i].article_id == selected[j].article_id) continue;
      CombinedEvidence c;
      c.first = static_cast<int>(i);
      c.second = static_cast<int>(j);
      c.tokens = selected[i].tokens;
      c.tokens.push_back(special_token_name(kSep));
      c.tokens.insert(c.tokens.end(), selected[j].tokens.begin(),
                      selected[j].tokens.end());
      out.push_back(std::move(c));
    }
  return out;
}

// --------------------------------------------------------------------------
// Evidence assembly (surface tokens plus table coordinates)

struct EvidenceTokens {
  std::vector<std::string> tokens;
  std::vector<int> row, col;  // 1-based for table cells, 0 elsewhere

  void push(const std::string& t, int r = 0, int c = 0) {
    tokens.push_back(t);
    row.push_back(r);
    col.push_back(c);
  }
};

// header row + the selected cell's row (+ separator + linked passage)
inline EvidenceTokens hybrid_compose(const QATable& table, int cell_row,
                                     int cell_col, const std::string& passage,
                                     int cell_max = 20) {
  int nrows = static_cast<int>(table.rows.size());
  int ncols = nrows == 0 ? 0 : static_cast<int>(table.rows[0].size());
  if (cell_row < 0 || cell_row >= nrows || cell_col < 0 || cell_col >= ncols)
    throw CellOutOfRange("cell (" + std::to_string(cell_row) + "," +
                         std::to_string(cell_col) + ") on " +
                         std::to_string(nrows) + "x" + std::to_string(ncols));
  EvidenceTokens out;
  auto emit_row = [&](int r, int local_r) {
    for (int c = 0; c < ncols; ++c) {
      std::vector<TokenSpan> toks = tokenize(table.rows[r][c]);
      int keep = std::min<int>(static_cast<int>(toks.size()), cell_max);
      for (int i = 0; i < keep; ++i)
        out.push(toks[i].text, local_r, c + 1);
    }
  };
  emit_row(0, 1);
  if (cell_row != 0) emit_row(cell_row, 2);
  if (!passage.empty()) {
    out.push(special_token_name(kSep));
    for (const TokenSpan& t : tokenize(passage)) out.push(t.text);
  }
  return out;
}

// Whole-table serialization for table mode, row-major with truncated cells.
inline EvidenceTokens table_serialize(const QATable& table, int cell_max = 20,
                                      int budget = 400) {
  EvidenceTokens out;
  int local_r = 0;
  for (const auto& row : table.rows) {
    ++local_r;
    EvidenceTokens pending;
    int local_c = 0;
    for (const std::string& cell : row) {
      ++local_c;
      std::vector<TokenSpan> toks = tokenize(cell);
      int keep = std::min<int>(static_cast<int>(toks.size()), cell_max);
      for (int i = 0; i < keep; ++i) pending.push(toks[i].text, local_r, local_c);
    }
    if (local_r > 1 &&
        static_cast<int>(out.tokens.size() + pending.tokens.size()) > budget)
      break;
    for (size_t i = 0; i < pending.tokens.size(); ++i)
      out.push(pending.tokens[i], pending.row[i], pending.col[i]);
  }
  return out;
}

// --------------------------------------------------------------------------
// Few-shot subsetting

template <typename T>
std::vector<T> fewshot_sample(const std::vector<T>& dataset, size_t k,
                              uint64_t seed) {
  if (k > dataset.size())
    throw KTooLarge(std::to_string(k) + " > " + std::to_string(dataset.size()));
  std::vector<size_t> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(hash_combine(fnv1a("fewshot"), seed));
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + rng.uniform(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());  // order-stable: canonical dataset order
  std::vector<T> out;
  for (size_t i : idx) out.push_back(dataset[i]);
  return out;
}

// --------------------------------------------------------------------------
// Span scorers

// Assembled input: [CLS] question [QUESTION] [SEP] evidence
struct EvalInput {
  std::vector<std::string> tokens;
  std::vector<int> segment, row, col;
  int question_pos = 0;                 // the appended [QUESTION]
  std::vector<int> domain;              // {CLS} ∪ evidence token positions
};

inline EvalInput assemble_input(const std::string& question,
                                const EvidenceTokens& evidence,
                                int total_max = 512) {
  EvalInput in;
  auto push = [&](const std::string& t, int seg, int r, int c) {
    in.tokens.push_back(t);
    in.segment.push_back(seg);
    in.row.push_back(r);
    in.col.push_back(c);
  };
  push(special_token_name(kCls), 0, 0, 0);
  for (const TokenSpan& t : tokenize(question)) push(t.text, 0, 0, 0);
  in.question_pos = static_cast<int>(in.tokens.size());
  push(special_token_name(kQuestion), 0, 0, 0);
  push(special_token_name(kSep), 0, 0, 0);
  int room = total_max - static_cast<int>(in.tokens.size());
  in.domain.push_back(0);
  for (size_t i = 0; i < evidence.tokens.size() && static_cast<int>(i) < room;
       ++i) {
    bool sep = evidence.tokens[i] == special_token_name(kSep);
    if (!sep) in.domain.push_back(static_cast<int>(in.tokens.size()));
    push(evidence.tokens[i], 1, evidence.row[i], evidence.col[i]);
  }
  return in;
}

// Maps an assembled input to span logits over its domain.
class SpanScorer {
 public:
  virtual ~SpanScorer() = default;
  virtual void score(const EvalInput& in, std::vector<double>& f_start,
                     std::vector<double>& f_end) const = 0;
};

// Runs the trained encoder and bilinear heads.
class ModelSpanScorer : public SpanScorer {
 public:
  explicit ModelSpanScorer(const LoadedParams& lp) : lp_(lp) {}

  void score(const EvalInput& in, std::vector<double>& f_start,
             std::vector<double>& f_end) const override {
    PretrainExample ex;
    for (const std::string& t : in.tokens) ex.token_ids.push_back(lp_.vocab.id(t));
    // special surface forms map to their reserved ids
    for (size_t i = 0; i < in.tokens.size(); ++i)
      for (int s = 0; s < kFirstRegularId; ++s)
        if (in.tokens[i] == special_token_name(s)) ex.token_ids[i] = s;
    ex.segment = in.segment;
    ex.row = in.row;
    ex.col = in.col;
    Mat H = encode(lp_.params, ex);
    f_start = span_logits(H, lp_.params.get("head.Ws"), in.question_pos,
                          in.domain);
    f_end = span_logits(H, lp_.params.get("head.We"), in.question_pos,
                        in.domain);
  }

 private:
  const LoadedParams& lp_;
};

// Test oracle: a span whose surface normalizes to a gold answer scores high;
// everything else stays at the CLS baseline.
class OracleSpanScorer : public SpanScorer {
 public:
  explicit OracleSpanScorer(std::vector<std::string> golds, int max_len = 30)
      : max_len_(max_len) {
    for (const std::string& g : golds) golds_.insert(normalize_answer(g));
  }

  void score(const EvalInput& in, std::vector<double>& f_start,
             std::vector<double>& f_end) const override {
    f_start.assign(in.domain.size(), 0.0);
    f_end.assign(in.domain.size(), 0.0);
    for (size_t si = 1; si < in.domain.size(); ++si) {
      std::string surface;
      for (size_t ei = si; ei < in.domain.size(); ++ei) {
        if (in.domain[ei] - in.domain[si] + 1 > max_len_) break;
        if (!surface.empty()) surface.push_back(' ');
        surface += in.tokens[in.domain[ei]];
        if (golds_.count(normalize_answer(surface))) {
          f_start[si] = 100.0;
          f_end[ei] = 100.0;
          return;
        }
      }
    }
  }

 private:
  std::set<std::string> golds_;
  int max_len_;
};

// --------------------------------------------------------------------------
// Evaluation

enum class EvalMode { Single, Hotpot, Table, Hybrid };

inline EvalMode eval_mode_from_name(const std::string& s) {
  if (s == "single") return EvalMode::Single;
  if (s == "hotpot") return EvalMode::Hotpot;
  if (s == "table") return EvalMode::Table;
  if (s == "hybrid") return EvalMode::Hybrid;
  throw SchemaViolation("unknown eval mode: " + s);
}

struct EvalOptions {
  EvalMode mode = EvalMode::Single;
  int total_max = 512;
  int hotpot_window = 200;
  int stride = 128;
  int topk = 3;
  int max_span_len = 30;
  int threads = 1;
  // window selector for hotpot mode; default ranks by gold-free lexical
  // overlap with the question
  WindowScorer selector;
};

inline WindowScorer question_overlap_scorer() {
  return [](const std::string& question, const Window& w) {
    std::set<std::string> q;
    for (const TokenSpan& t : tokenize(question)) q.insert(t.text);
    int hits = 0;
    for (const std::string& t : w.tokens) hits += q.count(t) ? 1 : 0;
    return static_cast<double>(hits);
  };
}

// All evidence inputs for one example under a mode.
inline std::vector<EvalInput> assemble_example(const QAExample& ex,
                                               const EvalOptions& opt) {
  std::vector<EvalInput> inputs;
  switch (opt.mode) {
    case EvalMode::Single: {
      int qlen = static_cast<int>(tokenize(ex.question).size());
      int window = opt.total_max - qlen - 3;
      if (window <= opt.stride) window = opt.stride + 1;
      for (const QADocument& doc : ex.documents)
        for (const Window& w : split_document(doc, window, opt.stride)) {
          EvidenceTokens ev;
          for (const std::string& t : w.tokens) ev.push(t);
          inputs.push_back(assemble_input(ex.question, ev, opt.total_max));
        }
      break;
    }
    case EvalMode::Hotpot: {
      std::vector<Window> windows;
      for (const QADocument& doc : ex.documents)
        for (Window& w : split_document(doc, opt.hotpot_window, opt.stride))
          windows.push_back(std::move(w));
      WindowScorer sel = opt.selector ? opt.selector : question_overlap_scorer();
      std::vector<Window> top = select_topk(ex.question, windows, sel, opt.topk);
      for (const CombinedEvidence& c : hotpot_combine(top)) {
        EvidenceTokens ev;
        for (const std::string& t : c.tokens) ev.push(t);
        inputs.push_back(assemble_input(ex.question, ev, opt.total_max));
      }
      break;
    }
    case EvalMode::Table: {
      for (const QATable& t : ex.tables) {
        EvidenceTokens ev = table_serialize(t);
        inputs.push_back(assemble_input(ex.question, ev, opt.total_max));
      }
      break;
    }
    case EvalMode::Hybrid: {
      for (const QATable& t : ex.tables) {
        if (t.linked_row < 0) throw CellOutOfRange("no linked cell: " + ex.id);
        EvidenceTokens ev = hybrid_compose(t, t.linked_row, t.linked_col,
                                           t.linked_passage);
        inputs.push_back(assemble_input(ex.question, ev, opt.total_max));
      }
      break;
    }
  }
  return inputs;
}

struct Prediction {
  std::optional<std::string> answer;  // nullopt = no-answer
  double score = 0.0;                 // best g across inputs
};

inline Prediction predict(const QAExample& ex, const SpanScorer& scorer,
                          const EvalOptions& opt) {
  Prediction best;
  bool any = false;
  for (const EvalInput& in : assemble_example(ex, opt)) {
    if (in.domain.size() <= 1) continue;
    std::vector<double> f_start, f_end;
    scorer.score(in, f_start, f_end);
    std::vector<RankedSpan> ranked =
        rank_spans(f_start, f_end, in.domain, opt.max_span_len);
    if (ranked.empty()) continue;
    const RankedSpan& top = ranked.front();
    if (!any || top.score > best.score) {
      any = true;
      best.score = top.score;
      if (top.score > 0.0) {
        std::string surface;
        for (int p = top.start; p <= top.end; ++p) {
          if (!surface.empty()) surface.push_back(' ');
          surface += in.tokens[p];
        }
        best.answer = surface;
      } else {
        best.answer = std::nullopt;
      }
    }
  }
  return best;
}

inline double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

// Scorer factory per example so the test oracle can depend on the gold set.
using ScorerFactory =
    std::function<const SpanScorer&(const QAExample&)>;

inline MetricReport evaluate(const std::vector<QAExample>& dataset,
                             const ScorerFactory& scorer_for,
                             const EvalOptions& opt) {
  std::vector<std::pair<double, double>> scores(dataset.size());
  parallel_for(dataset.size(), opt.threads, [&](size_t i) {
    Prediction p = predict(dataset[i], scorer_for(dataset[i]), opt);
    scores[i] = em_f1(p.answer, dataset[i].gold_answers, dataset[i].answerable);
  });
  MetricReport rep;
  rep.n = static_cast<int>(dataset.size());
  for (auto& [em, f1] : scores) {
    rep.em += em;
    rep.f1 += f1;
  }
  if (rep.n > 0) {
    rep.em = round4(rep.em / rep.n);
    rep.f1 = round4(rep.f1 / rep.n);
  }
  return rep;
}

inline MetricReport evaluate(const std::vector<QAExample>& dataset,
                             const SpanScorer& scorer, const EvalOptions& opt) {
  return evaluate(
      dataset, [&](const QAExample&) -> const SpanScorer& { return scorer; },
      opt);
}

// --------------------------------------------------------------------------
// Trainable window selector: logistic regression on the encoder CLS vector
// against "window contains a gold span" labels.

class LinearSelector {
 public:
  explicit LinearSelector(const LoadedParams& lp)
      : lp_(lp), w_(1, lp.params.cfg.d) {}

  double score(const std::string& question, const Window& window) const {
    Mat H = encode_window(question, window);
    double s = b_;
    for (int j = 0; j < w_.cols; ++j) s += w_.at(0, j) * H.at(0, j);
    return s;
  }

  WindowScorer as_scorer() const {
    return [this](const std::string& q, const Window& w) {
      return score(q, w);
    };
  }

  // Frozen-encoder logistic regression; labels[i] = window contains gold.
  void train(const std::vector<std::pair<std::string, Window>>& items,
             const std::vector<int>& labels, double lr = 0.1, int steps = 50) {
    if (items.size() != labels.size()) throw ShapeMismatch("labels mismatch");
    std::vector<Mat> cls;
    for (const auto& [q, w] : items) cls.push_back(encode_window(q, w));
    for (int step = 0; step < steps; ++step) {
      std::vector<double> gw(w_.cols, 0.0);
      double gb = 0.0;
      for (size_t i = 0; i < items.size(); ++i) {
        double s = b_;
        for (int j = 0; j < w_.cols; ++j) s += w_.at(0, j) * cls[i].at(0, j);
        double p = 1.0 / (1.0 + std::exp(-s));
        double g = p - labels[i];
        for (int j = 0; j < w_.cols; ++j) gw[j] += g * cls[i].at(0, j);
        gb += g;
      }
      double inv = 1.0 / items.size();
      for (int j = 0; j < w_.cols; ++j) w_.at(0, j) -= lr * gw[j] * inv;
      b_ -= lr * gb * inv;
    }
  }

 private:
  Mat encode_window(const std::string& question, const Window& window) const {
    EvidenceTokens ev;
    for (const std::string& t : window.tokens) ev.push(t);
    EvalInput in = assemble_input(question, ev);
    PretrainExample ex;
    for (const std::string& t : in.tokens) ex.token_ids.push_back(lp_.vocab.id(t));
    for (size_t i = 0; i < in.tokens.size(); ++i)
      for (int s = 0; s < kFirstRegularId; ++s)
        if (in.tokens[i] == special_token_name(s)) ex.token_ids[i] = s;
    ex.segment = in.segment;
    ex.row = in.row;
    ex.col = in.col;
    Mat H = encode(lp_.params, ex);
    Mat out(1, H.cols);
    for (int j = 0; j < H.cols; ++j) out.at(0, j) = H.at(0, j);
    return out;
  }

  const LoadedParams& lp_;
  Mat w_;
  double b_ = 0.0;
};

}  // namespace spanforge
