#pragma once

// Reference encoder and heads: pre-normalization transformer with additive
// token/position/segment/row/column embeddings, bilinear span heads driven
// by [QUESTION] query vectors, cell-selection heads, MLM head. Forward and
// hand-derived backward, both exact in 64-bit.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "spanforge/example_gen.hpp"
#include "spanforge/tensor.hpp"

namespace spanforge {

struct ModelConfig {
  int d = 32;
  int layers = 2;
  int heads = 4;
  int d_ff = 128;
  int vocab = 6;
  int max_pos = 512;
  int max_row = 64;
  int max_col = 16;

  json to_json() const {
    return json{{"d", d},       {"layers", layers},   {"heads", heads},
                {"d_ff", d_ff}, {"vocab", vocab},     {"max_pos", max_pos},
                {"max_row", max_row}, {"max_col", max_col}};
  }
  static ModelConfig from_json(const json& j) {
    ModelConfig c;
    c.d = j.at("d").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_pos = j.at("max_pos").get<int>();
    c.max_row = j.at("max_row").get<int>();
    c.max_col = j.at("max_col").get<int>();
    return c;
  }
};

// Named-tensor registry; iteration order is fixed by construction so the
// optimizer and the finite-difference check walk parameters identically.
struct ModelParams {
  ModelConfig cfg;
  std::vector<std::string> names;
  std::vector<Mat> tensors;
  std::map<std::string, int> index;

  Mat& get(const std::string& name) { return tensors[index.at(name)]; }
  const Mat& get(const std::string& name) const {
    return tensors[index.at(name)];
  }

  void add(const std::string& name, int r, int c) {
    index.emplace(name, static_cast<int>(tensors.size()));
    names.push_back(name);
    tensors.emplace_back(r, c);
  }

  static ModelParams make(const ModelConfig& cfg) {
    if (cfg.d % cfg.heads != 0) throw ShapeMismatch("d % heads != 0");
    ModelParams p;
    p.cfg = cfg;
    p.add("emb.tok", cfg.vocab, cfg.d);
    p.add("emb.pos", cfg.max_pos, cfg.d);
    p.add("emb.seg", 2, cfg.d);
    p.add("emb.row", cfg.max_row, cfg.d);
    p.add("emb.col", cfg.max_col, cfg.d);
    for (int l = 0; l < cfg.layers; ++l) {
      std::string pre = "l" + std::to_string(l) + ".";
      p.add(pre + "ln1.g", 1, cfg.d);
      p.add(pre + "ln1.b", 1, cfg.d);
      p.add(pre + "Wq", cfg.d, cfg.d);
      p.add(pre + "bq", 1, cfg.d);
      p.add(pre + "Wk", cfg.d, cfg.d);
      p.add(pre + "bk", 1, cfg.d);
      p.add(pre + "Wv", cfg.d, cfg.d);
      p.add(pre + "bv", 1, cfg.d);
      p.add(pre + "Wo", cfg.d, cfg.d);
      p.add(pre + "bo", 1, cfg.d);
      p.add(pre + "ln2.g", 1, cfg.d);
      p.add(pre + "ln2.b", 1, cfg.d);
      p.add(pre + "W1", cfg.d, cfg.d_ff);
      p.add(pre + "b1", 1, cfg.d_ff);
      p.add(pre + "W2", cfg.d_ff, cfg.d);
      p.add(pre + "b2", 1, cfg.d);
    }
    p.add("lnf.g", 1, cfg.d);
    p.add("lnf.b", 1, cfg.d);
    p.add("head.Ws", cfg.d, cfg.d);
    p.add("head.We", cfg.d, cfg.d);
    p.add("head.Wtok", cfg.d, cfg.d);
    p.add("head.Wrow", cfg.d, cfg.d);
    p.add("head.Wcol", cfg.d, cfg.d);
    p.add("mlm.W", cfg.vocab, cfg.d);
    p.add("mlm.b", 1, cfg.vocab);
    return p;
  }

  // normal(0, 0.02) weights, zero biases/offsets, unit normalization scales
  void init(uint64_t seed) {
    Rng rng(hash_combine(fnv1a("init"), seed));
    for (size_t t = 0; t < tensors.size(); ++t) {
      const std::string& n = names[t];
      bool is_gamma = n.size() > 5 && n.substr(n.size() - 5) == "ln1.g";
      is_gamma = is_gamma || (n.size() > 5 && n.substr(n.size() - 5) == "ln2.g");
      is_gamma = is_gamma || n == "lnf.g";
      bool is_bias = n.back() == 'b' || n.substr(n.rfind('.') + 1)[0] == 'b';
      if (is_gamma) {
        std::fill(tensors[t].a.begin(), tensors[t].a.end(), 1.0);
      } else if (is_bias) {
        tensors[t].zero();
      } else {
        for (double& v : tensors[t].a) v = 0.02 * rng.gaussian();
      }
    }
  }
};

// Gradient buffers mirroring a param registry.
struct Grads {
  std::vector<Mat> tensors;

  static Grads like(const ModelParams& p) {
    Grads g;
    for (const Mat& m : p.tensors) g.tensors.emplace_back(m.rows, m.cols);
    return g;
  }
  Mat& of(const ModelParams& p, const std::string& name) {
    return tensors[p.index.at(name)];
  }
  void zero() {
    for (Mat& m : tensors) m.zero();
  }
  void add_scaled(const Grads& o, double s) {
    for (size_t i = 0; i < tensors.size(); ++i)
      for (size_t k = 0; k < tensors[i].a.size(); ++k)
        tensors[i].a[k] += s * o.tensors[i].a[k];
  }
};

// --------------------------------------------------------------------------
// Encoder forward with full trace

namespace detail {

struct LnCache {
  Mat xhat;                 // T×d
  std::vector<double> inv;  // 1/sigma per row
};

inline void layer_norm(const Mat& x, const Mat& g, const Mat& b, Mat& out,
                       LnCache& cache) {
  int T = x.rows, d = x.cols;
  cache.xhat = Mat(T, d);
  cache.inv.assign(T, 0.0);
  constexpr double eps = 1e-6;
  for (int i = 0; i < T; ++i) {
    const double* xi = x.row(i);
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xi[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= d;
    double inv = 1.0 / std::sqrt(var + eps);
    cache.inv[i] = inv;
    for (int j = 0; j < d; ++j) {
      double xh = (xi[j] - mu) * inv;
      cache.xhat.at(i, j) = xh;
      out.at(i, j) = g.at(0, j) * xh + b.at(0, j);
    }
  }
}

// dx given dy; accumulates dg/db
inline void layer_norm_backward(const Mat& dy, const Mat& g,
                                const LnCache& cache, Mat& dx, Mat& dg,
                                Mat& db) {
  int T = dy.rows, d = dy.cols;
  for (int i = 0; i < T; ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < d; ++j) {
      double dxh = dy.at(i, j) * g.at(0, j);
      m1 += dxh;
      m2 += dxh * cache.xhat.at(i, j);
      dg.at(0, j) += dy.at(i, j) * cache.xhat.at(i, j);
      db.at(0, j) += dy.at(i, j);
    }
    m1 /= d;
    m2 /= d;
    for (int j = 0; j < d; ++j) {
      double dxh = dy.at(i, j) * g.at(0, j);
      dx.at(i, j) += cache.inv[i] * (dxh - m1 - cache.xhat.at(i, j) * m2);
    }
  }
}

struct LayerTrace {
  Mat x_in;   // T×d input to the block
  LnCache ln1;
  Mat a;      // LN1 output
  Mat Q, K, V;
  std::vector<Mat> probs;  // per head, T×T attention rows
  Mat concat;              // heads re-assembled, before Wo
  Mat x_mid;               // after attention residual
  LnCache ln2;
  Mat f;       // LN2 output
  Mat ff_pre;  // T×d_ff, before ReLU
  Mat ff_act;  // after ReLU
};

struct EncodeTrace {
  Mat embed_sum;  // T×d
  std::vector<LayerTrace> layers;
  LnCache lnf;
  Mat H;  // final hidden states
};

}  // namespace detail

inline void encode(const ModelParams& p, const PretrainExample& ex,
                   detail::EncodeTrace& tr) {
  const ModelConfig& cfg = p.cfg;
  int T = ex.length();
  if (T > cfg.max_pos) throw ShapeMismatch("sequence too long");
  int d = cfg.d, H = cfg.heads, dh = d / H;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Mat& tok = p.get("emb.tok");
  const Mat& pos = p.get("emb.pos");
  const Mat& seg = p.get("emb.seg");
  const Mat& rowe = p.get("emb.row");
  const Mat& cole = p.get("emb.col");

  tr.embed_sum = Mat(T, d);
  for (int i = 0; i < T; ++i) {
    int id = ex.token_ids[i];
    if (id < 0 || id >= cfg.vocab) throw ShapeMismatch("token id out of vocab");
    int r = std::min(ex.row[i], cfg.max_row - 1);
    int c = std::min(ex.col[i], cfg.max_col - 1);
    for (int j = 0; j < d; ++j)
      tr.embed_sum.at(i, j) = tok.at(id, j) + pos.at(i, j) +
                              seg.at(ex.segment[i], j) + rowe.at(r, j) +
                              cole.at(c, j);
  }

  Mat x = tr.embed_sum;
  tr.layers.clear();
  for (int l = 0; l < cfg.layers; ++l) {
    std::string pre = "l" + std::to_string(l) + ".";
    detail::LayerTrace lt;
    lt.x_in = x;

    lt.a = Mat(T, d);
    detail::layer_norm(x, p.get(pre + "ln1.g"), p.get(pre + "ln1.b"), lt.a,
                       lt.ln1);

    auto project = [&](const char* w, const char* b, Mat& out) {
      out = Mat(T, d);
      matmul(lt.a, p.get(pre + w), out);
      const Mat& bias = p.get(pre + b);
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) += bias.at(0, j);
    };
    project("Wq", "bq", lt.Q);
    project("Wk", "bk", lt.K);
    project("Wv", "bv", lt.V);

    lt.concat = Mat(T, d);
    lt.probs.assign(H, Mat(T, T));
    for (int h = 0; h < H; ++h) {
      int off = h * dh;
      Mat& P = lt.probs[h];
      for (int i = 0; i < T; ++i) {
        std::vector<double> logits(T);
        for (int k = 0; k < T; ++k) {
          double s = 0.0;
          for (int j = 0; j < dh; ++j)
            s += lt.Q.at(i, off + j) * lt.K.at(k, off + j);
          logits[k] = s * scale;
        }
        std::vector<double> probs = softmax(logits);
        for (int k = 0; k < T; ++k) P.at(i, k) = probs[k];
        for (int j = 0; j < dh; ++j) {
          double s = 0.0;
          for (int k = 0; k < T; ++k) s += probs[k] * lt.V.at(k, off + j);
          lt.concat.at(i, off + j) = s;
        }
      }
    }

    lt.x_mid = lt.x_in;
    {
      Mat attn_out(T, d);
      matmul(lt.concat, p.get(pre + "Wo"), attn_out);
      const Mat& bo = p.get(pre + "bo");
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j)
          lt.x_mid.at(i, j) += attn_out.at(i, j) + bo.at(0, j);
    }

    lt.f = Mat(T, d);
    detail::layer_norm(lt.x_mid, p.get(pre + "ln2.g"), p.get(pre + "ln2.b"),
                       lt.f, lt.ln2);
    lt.ff_pre = Mat(T, cfg.d_ff);
    matmul(lt.f, p.get(pre + "W1"), lt.ff_pre);
    {
      const Mat& b1 = p.get(pre + "b1");
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < cfg.d_ff; ++j) lt.ff_pre.at(i, j) += b1.at(0, j);
    }
    lt.ff_act = lt.ff_pre;
    for (double& v : lt.ff_act.a) v = v > 0.0 ? v : 0.0;

    x = lt.x_mid;
    {
      Mat ff_out(T, d);
      matmul(lt.ff_act, p.get(pre + "W2"), ff_out);
      const Mat& b2 = p.get(pre + "b2");
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) x.at(i, j) += ff_out.at(i, j) + b2.at(0, j);
    }
    tr.layers.push_back(std::move(lt));
  }

  tr.H = Mat(T, d);
  detail::layer_norm(x, p.get("lnf.g"), p.get("lnf.b"), tr.H, tr.lnf);
}

inline Mat encode(const ModelParams& p, const PretrainExample& ex) {
  detail::EncodeTrace tr;
  encode(p, ex, tr);
  return tr.H;
}

// --------------------------------------------------------------------------
// Span head: f(k) = H[k]^T W H[qpos] over the domain {CLS} ∪ evidence tokens
// (query tokens, separators and padding excluded).

inline std::vector<int> span_domain(const PretrainExample& ex) {
  std::vector<int> dom{0};  // CLS
  for (int i = 0; i < ex.length(); ++i)
    if (ex.segment[i] == 1 && !ex.is_special(i)) dom.push_back(i);
  return dom;
}

// logits over domain for one bilinear head
inline std::vector<double> span_logits(const Mat& H, const Mat& W, int qpos,
                                       const std::vector<int>& domain) {
  int d = H.cols;
  std::vector<double> u(d, 0.0);  // W * H[qpos]
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += W.at(i, j) * H.at(qpos, j);
    u[i] = s;
  }
  std::vector<double> logits(domain.size());
  for (size_t k = 0; k < domain.size(); ++k) {
    double s = 0.0;
    const double* hk = H.row(domain[k]);
    for (int j = 0; j < d; ++j) s += hk[j] * u[j];
    logits[k] = s;
  }
  return logits;
}

struct SpanDistributions {
  std::vector<int> domain;        // sequence positions; domain[0] is CLS
  std::vector<double> p_start, p_end;
  std::vector<double> f_start, f_end;  // raw logits
};

inline SpanDistributions span_scores(const Mat& H, const Mat& w_start,
                                     const Mat& w_end,
                                     const PretrainExample& ex,
                                     const QuestionSlot& slot) {
  SpanDistributions out;
  out.domain = span_domain(ex);
  if (out.domain.size() <= 1) throw EmptyEvidenceRegion(ex.query_locator);
  out.f_start = span_logits(H, w_start, slot.question_pos, out.domain);
  out.f_end = span_logits(H, w_end, slot.question_pos, out.domain);
  out.p_start = softmax(out.f_start);
  out.p_end = softmax(out.f_end);
  return out;
}

inline int domain_index_of(const std::vector<int>& domain, int pos) {
  auto it = std::find(domain.begin(), domain.end(), pos);
  if (it == domain.end()) throw ShapeMismatch("gold position outside domain");
  return static_cast<int>(it - domain.begin());
}

// L_SR over all slots given their distributions
inline double span_loss(const PretrainExample& ex,
                        const std::vector<SpanDistributions>& dists) {
  double loss = 0.0;
  for (size_t s = 0; s < ex.slots.size(); ++s) {
    const QuestionSlot& slot = ex.slots[s];
    const SpanDistributions& d = dists[s];
    int gs = slot.answerable ? domain_index_of(d.domain, slot.target_start) : 0;
    int ge = slot.answerable ? domain_index_of(d.domain, slot.target_end) : 0;
    loss += -std::log(d.p_start[gs]) - std::log(d.p_end[ge]);
  }
  return loss;
}

// --------------------------------------------------------------------------
// MLM head

inline double mlm_loss(const Mat& H, const Mat& w_mlm, const Mat& b_mlm,
                       const std::vector<MlmTarget>& targets) {
  if (targets.empty()) return 0.0;
  int V = w_mlm.rows, d = w_mlm.cols;
  double loss = 0.0;
  for (const MlmTarget& t : targets) {
    std::vector<double> logits(V);
    for (int v = 0; v < V; ++v) {
      double s = b_mlm.at(0, v);
      const double* wv = w_mlm.row(v);
      const double* hp = H.row(t.pos);
      for (int j = 0; j < d; ++j) s += wv[j] * hp[j];
      logits[v] = s;
    }
    std::vector<double> p = softmax(logits);
    loss += -std::log(p[t.original_id]);
  }
  return loss / static_cast<double>(targets.size());
}

struct LossReport {
  double l_sr = 0.0;
  double l_mlm = 0.0;
  double total() const { return l_sr + l_mlm; }
};

// --------------------------------------------------------------------------
// Cell selection (A-style scoring; forward only, not part of the loss)

struct TableLayout {
  // token positions per cell, row-major cell list with (row, col) 0-based
  struct CellTokens {
    int row = 0, col = 0;
    std::vector<int> positions;  // non-empty
  };
  std::vector<CellTokens> cells;
  int n_rows = 0, n_cols = 0;
};

// Builds the layout of the first table evidence piece of an example from its
// snippet-local row/col annotations (1-based in the token stream).
inline TableLayout table_layout_of(const PretrainExample& ex) {
  TableLayout lay;
  std::map<std::pair<int, int>, std::vector<int>> cells;
  for (int i = 0; i < ex.length(); ++i)
    if (ex.row[i] > 0 && ex.col[i] > 0)
      cells[{ex.row[i] - 1, ex.col[i] - 1}].push_back(i);
  for (auto& [rc, pos] : cells) {
    lay.cells.push_back({rc.first, rc.second, pos});
    lay.n_rows = std::max(lay.n_rows, rc.first + 1);
    lay.n_cols = std::max(lay.n_cols, rc.second + 1);
  }
  return lay;
}

struct CellScores {
  std::vector<double> p_token;  // over cells (their first tokens)
  std::vector<double> p_row;    // over rows
  std::vector<double> p_col;    // over cols
  std::vector<double> combined; // per cell: log p_token + log p_row + log p_col
  std::vector<std::pair<int, int>> cell_coords;
};

inline CellScores cell_scores(const Mat& H, const Mat& w_tok, const Mat& w_row,
                              const Mat& w_col, const TableLayout& layout,
                              int qpos) {
  if (layout.cells.empty()) throw EmptyTable("no table tokens");
  int d = H.cols;
  auto query_proj = [&](const Mat& W) {
    std::vector<double> u(d, 0.0);
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += W.at(i, j) * H.at(qpos, j);
      u[i] = s;
    }
    return u;
  };
  auto score = [&](int pos, const std::vector<double>& u) {
    double s = 0.0;
    const double* hp = H.row(pos);
    for (int j = 0; j < d; ++j) s += hp[j] * u[j];
    return s;
  };

  std::vector<double> u_tok = query_proj(w_tok);
  std::vector<double> u_row = query_proj(w_row);
  std::vector<double> u_col = query_proj(w_col);

  size_t n = layout.cells.size();
  std::vector<double> tok_logits(n), s_cell_row(n), s_cell_col(n);
  for (size_t c = 0; c < n; ++c) {
    const auto& cell = layout.cells[c];
    tok_logits[c] = score(cell.positions.front(), u_tok);
    double mr = 0.0, mc = 0.0;
    for (int pos : cell.positions) {
      mr += score(pos, u_row);
      mc += score(pos, u_col);
    }
    s_cell_row[c] = mr / cell.positions.size();
    s_cell_col[c] = mc / cell.positions.size();
  }

  constexpr double kNegInf = -1e300;
  std::vector<double> row_logits(layout.n_rows, kNegInf);
  std::vector<double> col_logits(layout.n_cols, kNegInf);
  for (size_t c = 0; c < n; ++c) {
    const auto& cell = layout.cells[c];
    row_logits[cell.row] = std::max(row_logits[cell.row], s_cell_row[c]);
    col_logits[cell.col] = std::max(col_logits[cell.col], s_cell_col[c]);
  }

  CellScores out;
  out.p_token = softmax(tok_logits);
  out.p_row = softmax(row_logits);
  out.p_col = softmax(col_logits);
  for (size_t c = 0; c < n; ++c) {
    const auto& cell = layout.cells[c];
    out.cell_coords.push_back({cell.row, cell.col});
    out.combined.push_back(std::log(out.p_token[c]) +
                           std::log(out.p_row[cell.row]) +
                           std::log(out.p_col[cell.col]));
  }
  return out;
}

// --------------------------------------------------------------------------
// Span ranking (inference)

struct RankedSpan {
  int start = 0, end = 0;  // sequence positions, start <= end
  double score = 0.0;
};

// g(s,e) = f_start(s)+f_end(e)-f_start(CLS)-f_end(CLS) over evidence spans
// with length <= max_len tokens; descending, ties by (start, end).
inline std::vector<RankedSpan> rank_spans(const std::vector<double>& f_start,
                                          const std::vector<double>& f_end,
                                          const std::vector<int>& domain,
                                          int max_len = 30) {
  std::vector<RankedSpan> out;
  double base = f_start[0] + f_end[0];
  for (size_t si = 1; si < domain.size(); ++si) {
    for (size_t ei = si; ei < domain.size(); ++ei) {
      if (domain[ei] - domain[si] + 1 > max_len) break;
      out.push_back({domain[si], domain[ei],
                     f_start[si] + f_end[ei] - base});
    }
  }
  std::sort(out.begin(), out.end(), [](const RankedSpan& a, const RankedSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  return out;
}

// top span if its g is positive, otherwise the null ([CLS]) answer
inline std::optional<RankedSpan> best_span(const std::vector<RankedSpan>& ranked) {
  if (!ranked.empty() && ranked.front().score > 0.0) return ranked.front();
  return std::nullopt;
}

// --------------------------------------------------------------------------
// Full forward + backward

struct ForwardTrace {
  detail::EncodeTrace enc;
  std::vector<SpanDistributions> dists;
  LossReport loss;
};

inline ForwardTrace forward(const ModelParams& p, const PretrainExample& ex) {
  ForwardTrace tr;
  encode(p, ex, tr.enc);
  const Mat& Ws = p.get("head.Ws");
  const Mat& We = p.get("head.We");
  for (const QuestionSlot& slot : ex.slots)
    tr.dists.push_back(span_scores(tr.enc.H, Ws, We, ex, slot));
  tr.loss.l_sr = span_loss(ex, tr.dists);
  tr.loss.l_mlm = mlm_loss(tr.enc.H, p.get("mlm.W"), p.get("mlm.b"),
                           ex.mlm_targets);
  return tr;
}

namespace detail {

// backprop of one bilinear head given softmax grad over the domain
inline void span_head_backward(const Mat& H, const Mat& W, int qpos,
                               const std::vector<int>& domain,
                               const std::vector<double>& dlogits, Mat& dH,
                               Mat& dW) {
  int d = H.cols;
  // recompute u = W H[qpos]
  std::vector<double> u(d, 0.0), du(d, 0.0);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += W.at(i, j) * H.at(qpos, j);
    u[i] = s;
  }
  for (size_t k = 0; k < domain.size(); ++k) {
    double g = dlogits[k];
    if (g == 0.0) continue;
    const double* hk = H.row(domain[k]);
    double* dhk = dH.row(domain[k]);
    for (int j = 0; j < d; ++j) {
      du[j] += g * hk[j];
      dhk[j] += g * u[j];
    }
  }
  // u = W q  =>  dW += du ⊗ q ; dq += W^T du
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) dW.at(i, j) += du[i] * H.at(qpos, j);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += W.at(i, j) * du[i];
    dH.at(qpos, j) += s;
  }
}

}  // namespace detail

// Exact gradients of loss.total() for every parameter tensor.
inline LossReport backward(const ModelParams& p, const PretrainExample& ex,
                           Grads& grads) {
  ForwardTrace tr = forward(p, ex);
  const ModelConfig& cfg = p.cfg;
  int T = ex.length(), d = cfg.d, H = cfg.heads, dh = d / H;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dH_(T, d);

  // span loss
  {
    const Mat& Ws = p.get("head.Ws");
    const Mat& We = p.get("head.We");
    Mat& dWs = grads.of(p, "head.Ws");
    Mat& dWe = grads.of(p, "head.We");
    for (size_t s = 0; s < ex.slots.size(); ++s) {
      const QuestionSlot& slot = ex.slots[s];
      const SpanDistributions& dist = tr.dists[s];
      int gs = slot.answerable ? domain_index_of(dist.domain, slot.target_start)
                               : 0;
      int ge = slot.answerable ? domain_index_of(dist.domain, slot.target_end)
                               : 0;
      std::vector<double> dstart = dist.p_start;
      dstart[gs] -= 1.0;
      std::vector<double> dend = dist.p_end;
      dend[ge] -= 1.0;
      detail::span_head_backward(tr.enc.H, Ws, slot.question_pos, dist.domain,
                                 dstart, dH_, dWs);
      detail::span_head_backward(tr.enc.H, We, slot.question_pos, dist.domain,
                                 dend, dH_, dWe);
    }
  }

  // mlm loss
  if (!ex.mlm_targets.empty()) {
    const Mat& Wm = p.get("mlm.W");
    const Mat& bm = p.get("mlm.b");
    Mat& dWm = grads.of(p, "mlm.W");
    Mat& dbm = grads.of(p, "mlm.b");
    double invn = 1.0 / static_cast<double>(ex.mlm_targets.size());
    int V = cfg.vocab;
    for (const MlmTarget& t : ex.mlm_targets) {
      std::vector<double> logits(V);
      for (int v = 0; v < V; ++v) {
        double s = bm.at(0, v);
        const double* wv = Wm.row(v);
        const double* hp = tr.enc.H.row(t.pos);
        for (int j = 0; j < d; ++j) s += wv[j] * hp[j];
        logits[v] = s;
      }
      std::vector<double> probs = softmax(logits);
      probs[t.original_id] -= 1.0;
      const double* hp = tr.enc.H.row(t.pos);
      double* dhp = dH_.row(t.pos);
      for (int v = 0; v < V; ++v) {
        double g = probs[v] * invn;
        if (g == 0.0) continue;
        double* dwv = dWm.row(v);
        const double* wv = Wm.row(v);
        dbm.at(0, v) += g;
        for (int j = 0; j < d; ++j) {
          dwv[j] += g * hp[j];
          dhp[j] += g * wv[j];
        }
      }
    }
  }

  // final layer norm
  Mat dx(T, d);
  detail::layer_norm_backward(dH_, p.get("lnf.g"), tr.enc.lnf, dx,
                              grads.of(p, "lnf.g"), grads.of(p, "lnf.b"));

  // transformer layers in reverse
  for (int l = cfg.layers - 1; l >= 0; --l) {
    std::string pre = "l" + std::to_string(l) + ".";
    const detail::LayerTrace& lt = tr.enc.layers[l];

    // FFN: x_out = x_mid + relu(f W1 + b1) W2 + b2
    Mat dff_act(T, cfg.d_ff);
    matmul_bt(dx, p.get(pre + "W2"), dff_act);           // d(ff_act)
    matmul_at_b_acc(lt.ff_act, dx, grads.of(p, "" + pre + "W2"));
    {
      Mat& db2 = grads.of(p, pre + "b2");
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) db2.at(0, j) += dx.at(i, j);
    }
    for (size_t k = 0; k < dff_act.a.size(); ++k)
      if (lt.ff_pre.a[k] <= 0.0) dff_act.a[k] = 0.0;
    Mat df(T, d);
    matmul_bt(dff_act, p.get(pre + "W1"), df);
    matmul_at_b_acc(lt.f, dff_act, grads.of(p, pre + "W1"));
    {
      Mat& db1 = grads.of(p, pre + "b1");
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < cfg.d_ff; ++j) db1.at(0, j) += dff_act.at(i, j);
    }
    Mat dx_mid = dx;  // residual path
    detail::layer_norm_backward(df, p.get(pre + "ln2.g"), lt.ln2, dx_mid,
                                grads.of(p, pre + "ln2.g"),
                                grads.of(p, pre + "ln2.b"));

    // attention: x_mid = x_in + concat Wo + bo
    Mat dconcat(T, d);
    matmul_bt(dx_mid, p.get(pre + "Wo"), dconcat);
    matmul_at_b_acc(lt.concat, dx_mid, grads.of(p, pre + "Wo"));
    {
      Mat& dbo = grads.of(p, pre + "bo");
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) dbo.at(0, j) += dx_mid.at(i, j);
    }

    Mat dQ(T, d), dK(T, d), dV(T, d);
    for (int h = 0; h < H; ++h) {
      int off = h * dh;
      const Mat& P = lt.probs[h];
      // dC = dconcat slice ; dP = dC V^T ; dV += P^T dC
      for (int i = 0; i < T; ++i) {
        // dP row and softmax backward for row i
        std::vector<double> dP(T, 0.0);
        for (int k = 0; k < T; ++k) {
          double s = 0.0;
          for (int j = 0; j < dh; ++j)
            s += dconcat.at(i, off + j) * lt.V.at(k, off + j);
          dP[k] = s;
        }
        for (int j = 0; j < dh; ++j) {
          double g = dconcat.at(i, off + j);
          if (g == 0.0) continue;
          for (int k = 0; k < T; ++k) dV.at(k, off + j) += P.at(i, k) * g;
        }
        double dot = 0.0;
        for (int k = 0; k < T; ++k) dot += dP[k] * P.at(i, k);
        // dS[k] = P[k] * (dP[k] - dot) ; S = scale * Q K^T
        for (int k = 0; k < T; ++k) {
          double dS = P.at(i, k) * (dP[k] - dot) * scale;
          if (dS == 0.0) continue;
          for (int j = 0; j < dh; ++j) {
            dQ.at(i, off + j) += dS * lt.K.at(k, off + j);
            dK.at(k, off + j) += dS * lt.Q.at(i, off + j);
          }
        }
      }
    }

    Mat da(T, d);
    auto unproject = [&](const char* w, const char* b, const Mat& dOut) {
      Mat tmp(T, d);
      matmul_bt(dOut, p.get(pre + w), tmp);
      for (size_t k = 0; k < da.a.size(); ++k) da.a[k] += tmp.a[k];
      matmul_at_b_acc(lt.a, dOut, grads.of(p, pre + w));
      Mat& db = grads.of(p, pre + b);
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j) db.at(0, j) += dOut.at(i, j);
    };
    unproject("Wq", "bq", dQ);
    unproject("Wk", "bk", dK);
    unproject("Wv", "bv", dV);

    Mat dx_in = dx_mid;  // residual into the block input
    detail::layer_norm_backward(da, p.get(pre + "ln1.g"), lt.ln1, dx_in,
                                grads.of(p, pre + "ln1.g"),
                                grads.of(p, pre + "ln1.b"));
    dx = std::move(dx_in);
  }

  // embeddings
  {
    Mat& dtok = grads.of(p, "emb.tok");
    Mat& dpos = grads.of(p, "emb.pos");
    Mat& dseg = grads.of(p, "emb.seg");
    Mat& drow = grads.of(p, "emb.row");
    Mat& dcol = grads.of(p, "emb.col");
    for (int i = 0; i < T; ++i) {
      int r = std::min(ex.row[i], cfg.max_row - 1);
      int c = std::min(ex.col[i], cfg.max_col - 1);
      for (int j = 0; j < d; ++j) {
        double g = dx.at(i, j);
        dtok.at(ex.token_ids[i], j) += g;
        dpos.at(i, j) += g;
        dseg.at(ex.segment[i], j) += g;
        drow.at(r, j) += g;
        dcol.at(c, j) += g;
      }
    }
  }

  return tr.loss;
}

}  // namespace spanforge
