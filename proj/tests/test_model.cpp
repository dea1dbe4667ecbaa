#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "spanforge/model.hpp"
#include "spanforge/optim.hpp"

using namespace spanforge;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.d_ff = 12;
  cfg.vocab = 10;
  cfg.max_pos = 16;
  cfg.max_row = 4;
  cfg.max_col = 4;
  return cfg;
}

void push(PretrainExample& ex, int id, int seg, int r, int c) {
  ex.token_ids.push_back(id);
  ex.segment.push_back(seg);
  ex.row.push_back(r);
  ex.col.push_back(c);
}

// [CLS] w [QUESTION] [SEP] | w w w ; one answerable slot over tokens 4..5
PretrainExample text_fixture() {
  PretrainExample ex;
  push(ex, kCls, 0, 0, 0);
  push(ex, 6, 0, 0, 0);
  push(ex, kQuestion, 0, 0, 0);
  push(ex, kSep, 0, 0, 0);
  push(ex, 7, 1, 0, 0);
  push(ex, 8, 1, 0, 0);
  push(ex, 9, 1, 0, 0);
  QuestionSlot s;
  s.question_pos = 2;
  s.answerable = true;
  s.target_start = 4;
  s.target_end = 5;
  ex.slots = {s};
  ex.mlm_targets = {{6, 9}};
  return ex;
}

// query with two [QUESTION]s, evidence is a 2x2 table snippet
PretrainExample table_fixture() {
  PretrainExample ex;
  push(ex, kCls, 0, 0, 0);
  push(ex, kQuestion, 0, 0, 0);
  push(ex, 6, 0, 0, 0);
  push(ex, kQuestion, 0, 0, 0);
  push(ex, kSep, 0, 0, 0);
  push(ex, 7, 1, 1, 1);  // header row
  push(ex, 8, 1, 1, 2);
  push(ex, 9, 1, 2, 1);  // data row; cell (2,1) has two tokens
  push(ex, 6, 1, 2, 1);
  push(ex, 7, 1, 2, 2);
  QuestionSlot a;
  a.question_pos = 1;
  a.answerable = true;
  a.target_start = 7;
  a.target_end = 8;
  QuestionSlot u;
  u.question_pos = 3;
  u.answerable = false;
  ex.slots = {a, u};
  ex.mlm_targets = {{9, 7}};
  return ex;
}

double fd_loss(const ModelParams& p, const PretrainExample& ex) {
  return forward(p, ex).loss.total();
}

void gradcheck(const PretrainExample& ex) {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(3);
  Grads g = Grads::like(p);
  backward(p, ex, g);

  ModelParams q = p;
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t t = 0; t < p.tensors.size(); ++t) {
    size_t n = p.tensors[t].a.size();
    size_t stride = std::max<size_t>(1, n / 6);
    for (size_t k = 0; k < n; k += stride) {
      double keep = q.tensors[t].a[k];
      q.tensors[t].a[k] = keep + h;
      double up = fd_loss(q, ex);
      q.tensors[t].a[k] = keep - h;
      double dn = fd_loss(q, ex);
      q.tensors[t].a[k] = keep;
      double num = (up - dn) / (2 * h);
      double ana = g.tensors[t].a[k];
      double rel = std::abs(num - ana) /
                   std::max(1e-6, std::abs(num) + std::abs(ana));
      worst = std::max(worst, rel);
      INFO(p.names[t] << "[" << k << "] num=" << num << " ana=" << ana);
      CHECK(rel < 1e-4);
    }
  }
  MESSAGE("worst relative error: " << worst);
}

}  // namespace

TEST_CASE("param registry shapes and init conventions") {
  ModelParams p = ModelParams::make(tiny_cfg());
  CHECK(p.get("emb.tok").rows == 10);
  CHECK(p.get("l0.W1").cols == 12);
  CHECK(p.get("mlm.b").cols == 10);
  p.init(7);
  // normalization scales are ones, biases zeros, weights small
  for (double v : p.get("l0.ln1.g").a) CHECK(v == 1.0);
  for (double v : p.get("lnf.g").a) CHECK(v == 1.0);
  for (double v : p.get("l0.bq").a) CHECK(v == 0.0);
  for (double v : p.get("mlm.b").a) CHECK(v == 0.0);
  bool nonzero = false;
  for (double v : p.get("l0.Wq").a) {
    CHECK(std::abs(v) < 0.2);
    if (v != 0.0) nonzero = true;
  }
  CHECK(nonzero);
  // same seed, same init
  ModelParams p2 = ModelParams::make(tiny_cfg());
  p2.init(7);
  for (size_t t = 0; t < p.tensors.size(); ++t)
    CHECK(p.tensors[t].a == p2.tensors[t].a);

  ModelConfig bad = tiny_cfg();
  bad.heads = 3;
  CHECK_THROWS_AS(ModelParams::make(bad), ShapeMismatch);
}

TEST_CASE("encode: shape, bitwise determinism, bounds checks") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(1);
  PretrainExample ex = text_fixture();
  Mat H1 = encode(p, ex);
  Mat H2 = encode(p, ex);
  CHECK(H1.rows == ex.length());
  CHECK(H1.cols == 8);
  CHECK(H1.a == H2.a);  // bitwise
  CHECK(all_finite(H1));

  PretrainExample bad = ex;
  bad.token_ids[1] = 99;  // out of vocab
  CHECK_THROWS_AS(encode(p, bad), ShapeMismatch);
  PretrainExample longex;
  for (int i = 0; i < 17; ++i) push(longex, kCls, 0, 0, 0);
  CHECK_THROWS_AS(encode(p, longex), ShapeMismatch);
}

TEST_CASE("span domain covers CLS plus non-special evidence tokens") {
  PretrainExample ex = table_fixture();
  CHECK(span_domain(ex) == std::vector<int>{0, 5, 6, 7, 8, 9});
  PretrainExample t = text_fixture();
  CHECK(span_domain(t) == std::vector<int>{0, 4, 5, 6});
}

TEST_CASE("span_scores: zero head gives the uniform distribution") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(2);
  p.get("head.Ws").zero();
  p.get("head.We").zero();
  PretrainExample ex = text_fixture();
  Mat H = encode(p, ex);
  SpanDistributions d =
      span_scores(H, p.get("head.Ws"), p.get("head.We"), ex, ex.slots[0]);
  REQUIRE(d.p_start.size() == 4);
  for (double v : d.p_start) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  for (double v : d.p_end) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("span logits: hand-computed bilinear softmax") {
  // d=2, q = (1,0), W = I, candidate states (0,0),(1,0),(0,1)
  Mat H(4, 2);
  H.at(1, 0) = 1.0;
  H.at(2, 1) = 1.0;
  H.at(3, 0) = 1.0;  // the question vector
  Mat W(2, 2);
  W.at(0, 0) = W.at(1, 1) = 1.0;
  std::vector<int> domain{0, 1, 2};
  std::vector<double> logits = span_logits(H, W, 3, domain);
  CHECK(logits[0] == doctest::Approx(0.0));
  CHECK(logits[1] == doctest::Approx(1.0));
  CHECK(logits[2] == doctest::Approx(0.0));
  std::vector<double> pr = softmax(logits);
  double e = std::exp(1.0);
  CHECK(pr[1] == doctest::Approx(e / (e + 2)).epsilon(1e-12));  // 0.57611688
  CHECK(pr[0] == doctest::Approx(1 / (e + 2)).epsilon(1e-12));  // 0.21194156
  CHECK(pr[0] + pr[1] + pr[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("span probabilities always sum to one") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(5);
  for (PretrainExample ex : {text_fixture(), table_fixture()}) {
    Mat H = encode(p, ex);
    for (const QuestionSlot& slot : ex.slots) {
      SpanDistributions d =
          span_scores(H, p.get("head.Ws"), p.get("head.We"), ex, slot);
      double ss = 0.0, se = 0.0;
      for (double v : d.p_start) ss += v;
      for (double v : d.p_end) se += v;
      CHECK(ss == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(se == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("span loss: hand value, perfect prediction, additivity") {
  PretrainExample ex = text_fixture();
  SpanDistributions d;
  d.domain = {0, 4, 5, 6};
  d.p_start = {0.3, 0.5, 0.1, 0.1};  // gold start at position 4 -> index 1
  d.p_end = {0.25, 0.25, 0.25, 0.25};  // gold end at position 5 -> index 2
  double loss = span_loss(ex, {d});
  CHECK(loss == doctest::Approx(-std::log(0.5) - std::log(0.25))
                    .epsilon(1e-12));  // ln 8 = 2.0794415

  SpanDistributions perfect;
  perfect.domain = d.domain;
  perfect.p_start = {0, 1, 0, 0};
  perfect.p_end = {0, 0, 1, 0};
  CHECK(span_loss(ex, {perfect}) == doctest::Approx(0.0));

  // two slots add up
  PretrainExample two = ex;
  two.slots.push_back(ex.slots[0]);
  CHECK(span_loss(two, {d, d}) == doctest::Approx(2 * loss).epsilon(1e-12));

  // an unanswerable slot targets the CLS index
  PretrainExample cls = ex;
  cls.slots[0].answerable = false;
  CHECK(span_loss(cls, {d}) ==
        doctest::Approx(-std::log(0.3) - std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("mlm loss: empty, uniform, independent recomputation") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(11);
  PretrainExample ex = text_fixture();
  Mat H = encode(p, ex);

  CHECK(mlm_loss(H, p.get("mlm.W"), p.get("mlm.b"), {}) == 0.0);

  Mat Wz(10, 8), bz(1, 10);  // zero head: uniform over the vocabulary
  CHECK(mlm_loss(H, Wz, bz, ex.mlm_targets) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));

  // log-sum-exp recomputation
  std::vector<MlmTarget> targets{{4, 7}, {5, 8}, {6, 9}};
  double want = 0.0;
  for (const MlmTarget& t : targets) {
    std::vector<double> lg(10);
    for (int v = 0; v < 10; ++v) {
      lg[v] = p.get("mlm.b").at(0, v);
      for (int j = 0; j < 8; ++j)
        lg[v] += p.get("mlm.W").at(v, j) * H.at(t.pos, j);
    }
    double mx = *std::max_element(lg.begin(), lg.end());
    double z = 0.0;
    for (double v : lg) z += std::exp(v - mx);
    want += mx + std::log(z) - lg[t.original_id];
  }
  want /= 3.0;
  CHECK(mlm_loss(H, p.get("mlm.W"), p.get("mlm.b"), targets) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("table layout reconstruction from coordinate annotations") {
  PretrainExample ex = table_fixture();
  TableLayout lay = table_layout_of(ex);
  CHECK(lay.n_rows == 2);
  CHECK(lay.n_cols == 2);
  REQUIRE(lay.cells.size() == 4);
  for (const auto& c : lay.cells) {
    if (c.row == 1 && c.col == 0)
      CHECK(c.positions == std::vector<int>{7, 8});
    else
      CHECK(c.positions.size() == 1);
  }
  CHECK_THROWS_AS(cell_scores(Mat(1, 1), Mat(1, 1), Mat(1, 1), Mat(1, 1),
                              TableLayout{}, 0),
                  EmptyTable);
}

TEST_CASE("cell scores: hand fixture in one dimension") {
  // H = [0, 1, 2, -1, 1]; qpos=4 so u = 1 for every head; scores = H values
  Mat H(5, 1);
  H.at(0, 0) = 0.0;
  H.at(1, 0) = 1.0;
  H.at(2, 0) = 2.0;
  H.at(3, 0) = -1.0;
  H.at(4, 0) = 1.0;
  Mat W(1, 1);
  W.at(0, 0) = 1.0;
  TableLayout lay;
  lay.cells = {{0, 0, {0}}, {0, 1, {1}}, {1, 0, {2}}, {1, 1, {3}}};
  lay.n_rows = lay.n_cols = 2;
  CellScores cs = cell_scores(H, W, W, W, lay, 4);

  // row logits are per-row maxima: row0 = max(0,1)=1, row1 = max(2,-1)=2
  double p_row1 = std::exp(2.0) / (std::exp(1.0) + std::exp(2.0));
  CHECK(cs.p_row[1] == doctest::Approx(p_row1).epsilon(1e-12));  // 0.7310586
  CHECK(cs.p_row[0] + cs.p_row[1] == doctest::Approx(1.0).epsilon(1e-12));
  // columns likewise: col0 = max(0,2)=2, col1 = max(1,-1)=1
  CHECK(cs.p_col[0] == doctest::Approx(p_row1).epsilon(1e-12));
  // combined is the sum of the three log probabilities
  for (size_t c = 0; c < cs.combined.size(); ++c) {
    auto [r, col] = cs.cell_coords[c];
    CHECK(cs.combined[c] == doctest::Approx(std::log(cs.p_token[c]) +
                                            std::log(cs.p_row[r]) +
                                            std::log(cs.p_col[col]))
                                .epsilon(1e-12));
  }
  // single-cell table: certainty everywhere
  TableLayout one;
  one.cells = {{0, 0, {2}}};
  one.n_rows = one.n_cols = 1;
  CellScores c1 = cell_scores(H, W, W, W, one, 4);
  CHECK(c1.p_token == std::vector<double>{1.0});
  CHECK(c1.combined[0] == doctest::Approx(0.0));
}

TEST_CASE("cell scores match an independent recomputation on random layouts") {
  int d = 4;
  Rng rng(99);
  auto rnd = [&] { return rng.uniform_real() * 2.0 - 1.0; };
  for (int trial = 0; trial < 100; ++trial) {
    int nr = 1 + static_cast<int>(rng.uniform(3));
    int nc = 1 + static_cast<int>(rng.uniform(3));
    TableLayout lay;
    int pos = 0;
    for (int r = 0; r < nr; ++r)
      for (int c = 0; c < nc; ++c) {
        TableLayout::CellTokens cell{r, c, {}};
        int n = 1 + static_cast<int>(rng.uniform(3));
        for (int i = 0; i < n; ++i) cell.positions.push_back(pos++);
        lay.cells.push_back(cell);
      }
    lay.n_rows = nr;
    lay.n_cols = nc;
    int qpos = pos;
    Mat H(pos + 1, d), Wt(d, d), Wr(d, d), Wc(d, d);
    for (double& v : H.a) v = rnd();
    for (double& v : Wt.a) v = rnd();
    for (double& v : Wr.a) v = rnd();
    for (double& v : Wc.a) v = rnd();
    CellScores got = cell_scores(H, Wt, Wr, Wc, lay, qpos);

    // independent recomputation
    auto proj = [&](const Mat& W) {
      std::vector<double> u(d, 0.0);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) u[i] += W.at(i, j) * H.at(qpos, j);
      return u;
    };
    auto dot = [&](int p2, const std::vector<double>& u) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += H.at(p2, j) * u[j];
      return s;
    };
    auto ut = proj(Wt), ur = proj(Wr), uc = proj(Wc);
    std::vector<double> tok(lay.cells.size());
    std::vector<double> rmax(nr, -1e308), cmax(nc, -1e308);
    for (size_t c = 0; c < lay.cells.size(); ++c) {
      const auto& cell = lay.cells[c];
      tok[c] = dot(cell.positions[0], ut);
      double sr = 0.0, sc = 0.0;
      for (int p2 : cell.positions) {
        sr += dot(p2, ur);
        sc += dot(p2, uc);
      }
      sr /= cell.positions.size();
      sc /= cell.positions.size();
      rmax[cell.row] = std::max(rmax[cell.row], sr);
      cmax[cell.col] = std::max(cmax[cell.col], sc);
    }
    auto sm = [](std::vector<double> v) { return softmax(v); };
    auto pt = sm(tok), pr = sm(rmax), pc = sm(cmax);
    for (size_t c = 0; c < lay.cells.size(); ++c) {
      CHECK(got.p_token[c] == doctest::Approx(pt[c]).epsilon(1e-12));
      auto [r, cc] = got.cell_coords[c];
      CHECK(got.combined[c] ==
            doctest::Approx(std::log(pt[c]) + std::log(pr[r]) +
                            std::log(pc[cc]))
                .epsilon(1e-12));
    }
    for (int r = 0; r < nr; ++r)
      CHECK(got.p_row[r] == doctest::Approx(pr[r]).epsilon(1e-12));
    for (int c = 0; c < nc; ++c)
      CHECK(got.p_col[c] == doctest::Approx(pc[c]).epsilon(1e-12));

    // permuting tokens within a cell leaves row/col distributions unchanged
    TableLayout shuffled = lay;
    for (auto& cell : shuffled.cells)
      std::reverse(cell.positions.begin(), cell.positions.end());
    CellScores got2 = cell_scores(H, Wt, Wr, Wc, shuffled, qpos);
    for (int r = 0; r < nr; ++r)
      CHECK(got2.p_row[r] == doctest::Approx(got.p_row[r]).epsilon(1e-12));
    for (int c = 0; c < nc; ++c)
      CHECK(got2.p_col[c] == doctest::Approx(got.p_col[c]).epsilon(1e-12));
  }
}

TEST_CASE("span ranking: hand fixture, null answer, tie order") {
  std::vector<int> domain{0, 3, 4, 5};
  std::vector<double> fs{0.1, 1.0, 0.2, 0.0};
  std::vector<double> fe{0.0, 0.1, 0.2, 0.7};
  auto ranked = rank_spans(fs, fe, domain);
  REQUIRE(ranked.size() == 6);
  CHECK(ranked[0].start == 3);
  CHECK(ranked[0].end == 5);
  CHECK(ranked[0].score == doctest::Approx(1.6).epsilon(1e-12));
  auto best = best_span(ranked);
  REQUIRE(best.has_value());
  CHECK(best->start == 3);

  // a dominant CLS makes every g negative: null answer
  std::vector<double> fs2{10.0, 1.0, 0.2, 0.0};
  CHECK(!best_span(rank_spans(fs2, fe, domain)).has_value());

  // all-zero logits tie; order is (start, end) lexicographic
  std::vector<double> z(4, 0.0);
  auto tied = rank_spans(z, z, domain);
  for (size_t i = 1; i < tied.size(); ++i) {
    CHECK(std::make_pair(tied[i - 1].start, tied[i - 1].end) <
          std::make_pair(tied[i].start, tied[i].end));
  }

  // max_len limits the candidate set
  CHECK(rank_spans(fs, fe, domain, 1).size() == 3);
}

TEST_CASE("span ranking matches brute force on random inputs") {
  Rng rng(4242);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform(8));
    std::vector<int> domain{0};
    int pos = 1 + static_cast<int>(rng.uniform(3));
    for (int i = 1; i < n; ++i) {
      domain.push_back(pos);
      pos += 1 + static_cast<int>(rng.uniform(3));
    }
    std::vector<double> fs(n), fe(n);
    for (double& v : fs) v = rng.uniform_real() * 4 - 2;
    for (double& v : fe) v = rng.uniform_real() * 4 - 2;
    int max_len = 1 + static_cast<int>(rng.uniform(10));

    auto ranked = rank_spans(fs, fe, domain, max_len);

    // brute force without the early break
    std::vector<RankedSpan> want;
    double base = fs[0] + fe[0];
    for (int si = 1; si < n; ++si)
      for (int ei = si; ei < n; ++ei)
        if (domain[ei] - domain[si] + 1 <= max_len)
          want.push_back({domain[si], domain[ei], fs[si] + fe[ei] - base});
    REQUIRE(ranked.size() == want.size());
    if (want.empty()) continue;
    auto top = *std::max_element(want.begin(), want.end(),
                                 [](const RankedSpan& a, const RankedSpan& b) {
                                   return a.score < b.score;
                                 });
    CHECK(ranked.front().score == doctest::Approx(top.score).epsilon(1e-12));

    // shifting both CLS logits leaves every g unchanged
    std::vector<double> fs3 = fs, fe3 = fe;
    double c1 = rng.uniform_real(), c2 = rng.uniform_real();
    for (double& v : fs3) v += c1;
    for (double& v : fe3) v += c2;
    auto shifted = rank_spans(fs3, fe3, domain, max_len);
    for (size_t i = 0; i < ranked.size(); ++i) {
      CHECK(shifted[i].start == ranked[i].start);
      CHECK(shifted[i].end == ranked[i].end);
      CHECK(shifted[i].score ==
            doctest::Approx(ranked[i].score).epsilon(1e-9));
    }
  }
}

TEST_CASE("empty evidence region is rejected") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(1);
  PretrainExample ex;
  push(ex, kCls, 0, 0, 0);
  push(ex, kQuestion, 0, 0, 0);
  QuestionSlot s;
  s.question_pos = 1;
  ex.slots = {s};
  Mat H = encode(p, ex);
  CHECK_THROWS_AS(span_scores(H, p.get("head.Ws"), p.get("head.We"), ex,
                              ex.slots[0]),
                  EmptyEvidenceRegion);
}

TEST_CASE("backward matches central finite differences: text example") {
  gradcheck(text_fixture());
}

TEST_CASE("backward matches central finite differences: table example") {
  gradcheck(table_fixture());
}

TEST_CASE("cell-selection heads receive no gradient from the loss") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(6);
  Grads g = Grads::like(p);
  backward(p, table_fixture(), g);
  for (const char* name : {"head.Wtok", "head.Wrow", "head.Wcol"})
    for (double v : g.of(p, name).a) CHECK(v == 0.0);
  // but the span heads do
  double sum = 0.0;
  for (double v : g.of(p, "head.Ws").a) sum += std::abs(v);
  CHECK(sum > 0.0);
}

TEST_CASE("loss report splits span and mlm terms consistently") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(8);
  PretrainExample ex = table_fixture();
  Grads g = Grads::like(p);
  LossReport rep = backward(p, ex, g);
  CHECK(rep.total() == doctest::Approx(rep.l_sr + rep.l_mlm));
  CHECK(rep.l_sr > 0.0);
  CHECK(rep.l_mlm > 0.0);
  // dropping mlm targets zeroes the mlm term and its head gradients
  PretrainExample no_mlm = ex;
  no_mlm.mlm_targets.clear();
  Grads g2 = Grads::like(p);
  LossReport rep2 = backward(p, no_mlm, g2);
  CHECK(rep2.l_mlm == 0.0);
  CHECK(rep2.l_sr == doctest::Approx(rep.l_sr).epsilon(1e-12));
  for (double v : g2.of(p, "mlm.W").a) CHECK(v == 0.0);
  for (double v : g2.of(p, "mlm.b").a) CHECK(v == 0.0);
}

TEST_CASE("adamw: decay classification") {
  CHECK(AdamW::decays("l0.Wq"));
  CHECK(AdamW::decays("emb.tok"));
  CHECK(AdamW::decays("head.Ws"));
  CHECK(AdamW::decays("mlm.W"));
  CHECK(!AdamW::decays("l0.bq"));
  CHECK(!AdamW::decays("mlm.b"));
  CHECK(!AdamW::decays("lnf.g"));
  CHECK(!AdamW::decays("lnf.b"));
  CHECK(!AdamW::decays("l0.ln1.g"));
  CHECK(!AdamW::decays("l0.ln2.b"));
}

TEST_CASE("adamw: zero gradient with zero decay leaves weights unchanged") {
  ModelParams p = ModelParams::make(tiny_cfg());
  p.init(4);
  ModelParams before = p;
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(p, cfg);
  Grads g = Grads::like(p);
  opt.step(p, g);
  for (size_t t = 0; t < p.tensors.size(); ++t)
    CHECK(p.tensors[t].a == before.tensors[t].a);
}

TEST_CASE("adamw: first step moves w=1, g=1 by about lr") {
  ModelParams p = ModelParams::make(tiny_cfg());
  Mat& w = p.get("head.Ws");
  std::fill(w.a.begin(), w.a.end(), 1.0);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(p, cfg);
  Grads g = Grads::like(p);
  std::fill(g.of(p, "head.Ws").a.begin(), g.of(p, "head.Ws").a.end(), 1.0);
  opt.step(p, g);
  // bias-corrected mhat = vhat = 1, so the update is lr/(1+eps)
  CHECK(p.get("head.Ws").at(0, 0) ==
        doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adamw: decoupled decay shrinks weights but not biases or scales") {
  ModelParams p = ModelParams::make(tiny_cfg());
  std::fill(p.get("head.Ws").a.begin(), p.get("head.Ws").a.end(), 1.0);
  std::fill(p.get("lnf.g").a.begin(), p.get("lnf.g").a.end(), 1.0);
  std::fill(p.get("mlm.b").a.begin(), p.get("mlm.b").a.end(), 1.0);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(p, cfg);
  Grads g = Grads::like(p);  // all-zero gradients isolate the decay term
  opt.step(p, g);
  CHECK(p.get("head.Ws").at(0, 0) ==
        doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-12));
  CHECK(p.get("lnf.g").at(0, 0) == 1.0);
  CHECK(p.get("mlm.b").at(0, 0) == 1.0);
}
