// spanforge: staged pipeline driver.
//
//   ingest    corpus JSONL -> enriched store JSON
//   pair      store -> per-query candidate groups JSONL
//   gen       groups + store -> pre-training examples JSONL
//   train-toy examples -> trained parameter file + loss trace
//   eval      parameters + QA dataset -> metric report
//   stats     artifact -> count report
//   audit     groups + store -> manual-labeling sheet
//
// Exit codes: 0 success, 1 validation/data error, 2 usage error.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spanforge/example_gen.hpp"
#include "spanforge/ingest.hpp"
#include "spanforge/pair_index.hpp"
#include "spanforge/params_io.hpp"
#include "spanforge/qa.hpp"
#include "spanforge/train.hpp"

namespace sf = spanforge;
using sf::json;

namespace {

constexpr const char* kTool = "spanforge";
constexpr const char* kVersion = "1.0.0";

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw sf::IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::string& path) {
  return hex64(sf::fnv1a(read_file(path)));
}

// Every artifact carries {tool version, effective config + hash, input hashes}.
json make_header(const std::string& stage, const json& config,
                 const std::vector<std::pair<std::string, std::string>>& inputs) {
  json jin = json::object();
  for (const auto& [name, path] : inputs) jin[name] = file_hash(path);
  return json{{"tool", kTool},
              {"version", kVersion},
              {"stage", stage},
              {"config", config},
              {"config_hash", hex64(sf::fnv1a(config.dump()))},
              {"inputs", jin}};
}

// Flat `key = value` config file; unknown keys are rejected.
std::map<std::string, std::string> parse_flat_config(
    const std::string& path, const std::set<std::string>& allowed) {
  std::map<std::string, std::string> out;
  std::ifstream is(path);
  if (!is) throw sf::IoError("cannot open config: " + path);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw sf::SchemaViolation(path + ":" + std::to_string(lineno) +
                                ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (!allowed.count(key))
      throw sf::SchemaViolation(path + ":" + std::to_string(lineno) +
                                ": unknown key: " + key);
    out[key] = val;
  }
  return out;
}

sf::CorpusStore load_store(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw sf::SchemaViolation(path + ": " + e.what());
  }
  return sf::store_from_json(j.contains("store") ? j.at("store") : j);
}

struct GroupsFile {
  json header;
  std::vector<sf::QueryGroup> groups;
};

GroupsFile load_groups(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw sf::IoError("cannot open: " + path);
  GroupsFile out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw sf::SchemaViolation(path + ": " + e.what());
    }
    if (first && j.contains("header")) {
      out.header = j.at("header");
      first = false;
      continue;
    }
    first = false;
    out.groups.push_back(sf::query_group_from_json(j));
  }
  return out;
}

sf::Rng mlm_rng(uint64_t seed, uint64_t epoch, const std::string& query) {
  uint64_t h = sf::hash_combine(sf::fnv1a("mlm"), sf::fnv1a(query));
  return sf::Rng(sf::hash_combine(h, sf::hash_combine(seed, epoch)));
}

// ---------------------------------------------------------------- ingest ---

struct IngestArgs {
  std::string corpus, out;
  unsigned threads = std::thread::hardware_concurrency();
};

void cmd_ingest(const IngestArgs& a) {
  std::string raw = read_file(a.corpus);
  std::istringstream is(raw);
  sf::CorpusStore store = sf::parse_corpus(is);
  sf::enrich_store(store, a.threads);

  json config{{"threads_independent", true}};
  json out{{"header", make_header("ingest", config, {{"corpus", a.corpus}})},
           {"stats",
            {{"pages", store.stats.n_pages},
             {"sentences", store.stats.n_sentences},
             {"tables", store.stats.n_tables},
             {"mentions", store.stats.n_mentions}}},
           {"store", sf::store_to_json(store)}};
  std::ofstream os(a.out, std::ios::binary);
  if (!os) throw sf::IoError("cannot open for writing: " + a.out);
  os << out.dump() << "\n";
  std::cerr << "ingested " << store.stats.n_pages << " pages, "
            << store.stats.n_sentences << " sentences, " << store.stats.n_tables
            << " tables -> " << a.out << "\n";
}

// ------------------------------------------------------------------ pair ---

struct PairArgs {
  std::string store, out, profile = "text";
  unsigned threads = std::thread::hardware_concurrency();
};

void cmd_pair(const PairArgs& a) {
  sf::CorpusStore store = load_store(a.store);
  sf::Profile profile = sf::profile_from_name(a.profile);
  sf::PairIndex index = sf::build_index(store);
  std::vector<sf::QueryGroup> groups =
      sf::build_query_groups(store, index, profile, a.threads);

  json config{{"profile", a.profile}};
  std::ofstream os(a.out, std::ios::binary);
  if (!os) throw sf::IoError("cannot open for writing: " + a.out);
  os << json{{"header", make_header("pair", config, {{"store", a.store}})}}
            .dump()
     << "\n";
  for (const sf::QueryGroup& g : groups) os << sf::to_json(g).dump() << "\n";
  std::cerr << "indexed " << index.postings.size() << " pairs; wrote "
            << groups.size() << " query groups -> " << a.out << "\n";
}

// ------------------------------------------------------------------- gen ---

struct GenArgs {
  std::string groups, store, out, profile, config_path;
  uint64_t seed = 0;
  int per_group = 3;
  bool no_mlm = false, no_unanswerable = false, single_evidence = false;
};

void cmd_gen(const GenArgs& a) {
  sf::CorpusStore store = load_store(a.store);
  GroupsFile gf = load_groups(a.groups);

  std::string profile_name = a.profile;
  if (profile_name.empty()) {
    if (!gf.header.contains("config") ||
        !gf.header.at("config").contains("profile"))
      throw sf::SchemaViolation("groups file has no profile; pass --profile");
    profile_name = gf.header.at("config").at("profile").get<std::string>();
  }
  sf::Profile profile = sf::profile_from_name(profile_name);

  sf::BudgetConfig budget;
  if (!a.config_path.empty()) {
    auto kv = parse_flat_config(
        a.config_path,
        {"query_max", "evidence_max_two", "evidence_max_one", "cell_max",
         "snippet_columns_max", "total_max"});
    auto geti = [&](const char* k, int& slot) {
      if (kv.count(k)) slot = std::stoi(kv.at(k));
    };
    geti("query_max", budget.query_max);
    geti("evidence_max_two", budget.evidence_max_two);
    geti("evidence_max_one", budget.evidence_max_one);
    geti("cell_max", budget.cell_max);
    geti("snippet_columns_max", budget.snippet_columns_max);
    geti("total_max", budget.total_max);
  }

  sf::GenOptions opt;
  opt.mlm = !a.no_mlm;
  opt.unanswerable = !a.no_unanswerable;
  opt.single_evidence = a.single_evidence;

  sf::Vocab vocab = sf::build_vocab(store);

  json config{{"profile", profile_name},
              {"seed", a.seed},
              {"per_group", a.per_group},
              {"mlm", opt.mlm},
              {"unanswerable", opt.unanswerable},
              {"single_evidence", opt.single_evidence},
              {"mlm_rate", opt.mlm_rate},
              {"budget",
               {{"query_max", budget.query_max},
                {"evidence_max_two", budget.evidence_max_two},
                {"evidence_max_one", budget.evidence_max_one},
                {"cell_max", budget.cell_max},
                {"snippet_columns_max", budget.snippet_columns_max},
                {"total_max", budget.total_max}}}};

  std::ofstream os(a.out, std::ios::binary);
  if (!os) throw sf::IoError("cannot open for writing: " + a.out);
  os << json{{"header", make_header("gen", config,
                                    {{"groups", a.groups}, {"store", a.store}})},
             {"vocab", vocab.all()}}
            .dump()
     << "\n";

  int written = 0, skipped = 0;
  for (const sf::QueryGroup& g : gf.groups) {
    for (int epoch = 0; epoch < a.per_group; ++epoch) {
      try {
        sf::PretrainExample ex = sf::sample_example(
            store, g, a.seed, budget, profile, vocab, opt, epoch);
        if (opt.mlm) {
          sf::Rng rng = mlm_rng(a.seed, epoch, ex.query_locator);
          sf::apply_mlm(ex, rng, vocab, opt.mlm_rate);
        }
        os << sf::serialize(ex) << "\n";
        ++written;
      } catch (const sf::NoViableExample&) {
        ++skipped;
      }
    }
  }
  std::cerr << "generated " << written << " examples (" << skipped
            << " skipped) -> " << a.out << "\n";
}

// ------------------------------------------------------------- train-toy ---

struct ExamplesFile {
  json header;
  sf::Vocab vocab;
  std::vector<sf::PretrainExample> examples;
};

ExamplesFile load_examples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw sf::IoError("cannot open: " + path);
  ExamplesFile out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw sf::SchemaViolation(path + ": " + e.what());
      }
      if (j.contains("header")) {
        out.header = j.at("header");
        if (j.contains("vocab"))
          out.vocab = sf::Vocab(j.at("vocab").get<std::vector<std::string>>());
        continue;
      }
      out.examples.push_back(sf::deserialize_example(line));
      continue;
    }
    out.examples.push_back(sf::deserialize_example(line));
  }
  return out;
}

struct TrainArgs {
  std::string examples, out, config_path, trace;
  uint64_t seed = 0;
  unsigned threads = std::thread::hardware_concurrency();
};

void cmd_train(const TrainArgs& a) {
  ExamplesFile ef = load_examples(a.examples);
  if (ef.examples.empty()) throw sf::SchemaViolation("no examples in file");

  sf::TrainConfig tc;
  tc.adamw.lr = 5e-4;
  if (!a.config_path.empty()) {
    auto kv = parse_flat_config(
        a.config_path,
        {"d", "layers", "heads", "d_ff", "lr", "beta1", "beta2", "eps",
         "weight_decay", "steps", "batch_size"});
    auto geti = [&](const char* k, int& s) {
      if (kv.count(k)) s = std::stoi(kv.at(k));
    };
    auto getd = [&](const char* k, double& s) {
      if (kv.count(k)) s = std::stod(kv.at(k));
    };
    geti("d", tc.model.d);
    geti("layers", tc.model.layers);
    geti("heads", tc.model.heads);
    geti("d_ff", tc.model.d_ff);
    getd("lr", tc.adamw.lr);
    getd("beta1", tc.adamw.beta1);
    getd("beta2", tc.adamw.beta2);
    getd("eps", tc.adamw.eps);
    getd("weight_decay", tc.adamw.weight_decay);
    geti("steps", tc.steps);
    geti("batch_size", tc.batch_size);
  }
  tc.model.vocab = ef.vocab.size();
  tc.seed = a.seed;
  tc.threads = static_cast<int>(a.threads);

  sf::TrainResult res = sf::train_toy(ef.examples, tc, ef.vocab);

  std::vector<std::pair<std::string, std::string>> inputs{
      {"examples", a.examples}};
  if (!a.config_path.empty()) inputs.push_back({"config", a.config_path});
  json header = make_header("train-toy", tc.to_json(), inputs);
  sf::save_params(a.out, res.params, ef.vocab, json{{"header", header}});

  std::string trace_path = a.trace.empty() ? a.out + ".trace.jsonl" : a.trace;
  std::ofstream ts(trace_path, std::ios::binary);
  if (!ts) throw sf::IoError("cannot open for writing: " + trace_path);
  ts << json{{"header", header}}.dump() << "\n";
  for (const sf::StepRecord& r : res.trace)
    ts << json{{"step", r.step},
               {"l_sr", r.loss.l_sr},
               {"l_mlm", r.loss.l_mlm},
               {"total", r.loss.total()}}
              .dump()
       << "\n";
  ts << json{{"final", {{"slot_em", res.slot_em}, {"n_slots", res.n_slots}}}}
            .dump()
     << "\n";
  std::cerr << "trained " << tc.steps << " steps; slot_em=" << res.slot_em
            << " over " << res.n_slots << " slots -> " << a.out << "\n";
}

// ------------------------------------------------------------------ eval ---

struct EvalArgs {
  std::string params, dataset, mode = "single", out;
  bool oracle = false;
  unsigned threads = std::thread::hardware_concurrency();
};

void cmd_eval(const EvalArgs& a) {
  std::vector<sf::QAExample> dataset;
  {
    std::istringstream is(read_file(a.dataset));
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw sf::SchemaViolation(a.dataset + ": " + e.what());
      }
      dataset.push_back(sf::qa_example_from_json(j));
    }
  }

  sf::EvalOptions opt;
  opt.mode = sf::eval_mode_from_name(a.mode);
  opt.threads = static_cast<int>(a.threads);

  sf::MetricReport rep;
  std::vector<std::pair<std::string, std::string>> inputs{
      {"dataset", a.dataset}};
  if (a.oracle) {
    std::vector<std::unique_ptr<sf::OracleSpanScorer>> oracles;
    for (const sf::QAExample& ex : dataset)
      oracles.push_back(
          std::make_unique<sf::OracleSpanScorer>(ex.gold_answers));
    rep = sf::evaluate(
        dataset,
        [&](const sf::QAExample& ex) -> const sf::SpanScorer& {
          return *oracles[&ex - dataset.data()];
        },
        opt);
  } else {
    if (a.params.empty())
      throw sf::SchemaViolation("--params required unless --oracle");
    sf::LoadedParams lp = sf::load_params(a.params);
    sf::ModelSpanScorer scorer(lp);
    rep = sf::evaluate(dataset, scorer, opt);
    inputs.push_back({"params", a.params});
  }

  json config{{"mode", a.mode}, {"oracle", a.oracle}};
  json out{{"header", make_header("eval", config, inputs)},
           {"em", rep.em},
           {"f1", rep.f1},
           {"n", rep.n}};
  std::ofstream os(a.out, std::ios::binary);
  if (!os) throw sf::IoError("cannot open for writing: " + a.out);
  os << out.dump(2) << "\n";
  std::cerr << "mode=" << a.mode << " n=" << rep.n << " em=" << rep.em
            << " f1=" << rep.f1 << " -> " << a.out << "\n";
}

// ----------------------------------------------------------------- stats ---

struct StatsArgs {
  std::string input, out;
};

void cmd_stats(const StatsArgs& a) {
  std::istringstream is(read_file(a.input));
  std::string line;
  json header;
  std::set<std::string> queries, sentences, tables, pairs;
  std::map<std::string, int> categories;
  int n_records = 0, n_slots = 0, n_unanswerable = 0, n_mlm = 0;
  std::string kind = "empty";

  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw sf::SchemaViolation(a.input + ": " + e.what());
    }
    if (first) {
      first = false;
      if (j.contains("header")) {
        header = j.at("header");
        if (header.contains("stage"))
          kind = header.at("stage").get<std::string>();
        if (j.contains("store")) {
          // single-record store artifact
          sf::CorpusStore store = sf::store_from_json(j.at("store"));
          sf::PairIndex index = sf::build_index(store);
          json rep{{"kind", "store"},
                   {"pages", store.stats.n_pages},
                   {"sentences", store.stats.n_sentences},
                   {"tables", store.stats.n_tables},
                   {"entity_pairs", index.postings.size()},
                   {"mentions", store.stats.n_mentions}};
          std::ostream* os = &std::cout;
          std::ofstream fs;
          if (!a.out.empty()) {
            fs.open(a.out, std::ios::binary);
            if (!fs) throw sf::IoError("cannot write: " + a.out);
            os = &fs;
          }
          *os << rep.dump(2) << "\n";
          std::cerr << "kind          store\n"
                    << "pages         " << store.stats.n_pages << "\n"
                    << "sentences     " << store.stats.n_sentences << "\n"
                    << "tables        " << store.stats.n_tables << "\n"
                    << "entity pairs  " << index.postings.size() << "\n";
          return;
        }
        continue;
      }
    }
    ++n_records;
    if (j.contains("query") && j.contains("pairs")) {
      kind = "groups";
      sf::QueryGroup g = sf::query_group_from_json(j);
      queries.insert(g.query.str());
      for (const sf::QueryPair& qp : g.pairs) {
        pairs.insert(qp.pair.str());
        for (const sf::EvidenceRef& ref : qp.candidates)
          (ref.kind == sf::EvidenceKind::Text ? sentences : tables)
              .insert(ref.unit_key());
      }
    } else if (j.contains("token_ids")) {
      kind = "examples";
      sf::PretrainExample ex = sf::example_from_json(j);
      queries.insert(ex.query_locator);
      ++categories[sf::category_name(ex.category)];
      for (const std::string& u : ex.evidence_units)
        (u.rfind("s:", 0) == 0 ? sentences : tables).insert(u);
      for (const sf::QuestionSlot& s : ex.slots) {
        ++n_slots;
        if (!s.answerable) ++n_unanswerable;
      }
      n_mlm += static_cast<int>(ex.mlm_targets.size());
    } else {
      throw sf::SchemaViolation("unrecognized record in " + a.input);
    }
  }

  json rep{{"kind", kind},
           {"records", n_records},
           {"queries", queries.size()},
           {"sentences", sentences.size()},
           {"tables", tables.size()},
           {"entity_pairs", pairs.size()},
           {"categories", categories},
           {"slots", n_slots},
           {"unanswerable_slots", n_unanswerable},
           {"mlm_targets", n_mlm}};
  std::ostream* os = &std::cout;
  std::ofstream fs;
  if (!a.out.empty()) {
    fs.open(a.out, std::ios::binary);
    if (!fs) throw sf::IoError("cannot write: " + a.out);
    os = &fs;
  }
  *os << rep.dump(2) << "\n";

  std::cerr << "kind              " << kind << "\n"
            << "records           " << n_records << "\n"
            << "queries           " << queries.size() << "\n"
            << "evidence sents    " << sentences.size() << "\n"
            << "evidence tables   " << tables.size() << "\n"
            << "entity pairs      " << pairs.size() << "\n"
            << "slots             " << n_slots << " (" << n_unanswerable
            << " unanswerable)\n"
            << "mlm targets       " << n_mlm << "\n";
  for (const auto& [c, k] : categories)
    std::cerr << "  " << c << "  " << k << "\n";
}

// ----------------------------------------------------------------- audit ---

struct AuditArgs {
  std::string groups, store, out;
  int n = 50;
  uint64_t seed = 0;
};

std::string highlight(const std::string& text, size_t s1, size_t e1, size_t s2,
                      size_t e2) {
  // wrap the two mention ranges (non-overlapping, arbitrary order) in **
  std::vector<std::pair<size_t, size_t>> spans{{s1, e1}, {s2, e2}};
  std::sort(spans.begin(), spans.end());
  std::string out;
  size_t pos = 0;
  for (auto& [a, b] : spans) {
    if (a < pos || b > text.size()) continue;
    out += text.substr(pos, a - pos);
    out += "**" + text.substr(a, b - a) + "**";
    pos = b;
  }
  out += text.substr(pos);
  std::string esc;
  for (char c : out) {
    if (c == '|') esc += "\\|";
    else esc.push_back(c);
  }
  return esc;
}

void cmd_audit(const AuditArgs& a) {
  sf::CorpusStore store = load_store(a.store);
  GroupsFile gf = load_groups(a.groups);
  if (static_cast<size_t>(a.n) > gf.groups.size())
    throw sf::TooFewGroups(std::to_string(gf.groups.size()) + " groups < n=" +
                           std::to_string(a.n));

  sf::Rng rng(sf::hash_combine(sf::fnv1a("audit"), a.seed));
  std::vector<size_t> idx(gf.groups.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < a.n; ++i) {
    size_t j = i + rng.uniform(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(a.n);
  std::sort(idx.begin(), idx.end());

  std::ofstream os(a.out, std::ios::binary);
  if (!os) throw sf::IoError("cannot open for writing: " + a.out);
  os << "| # | Pair | Query | Evidence | All the same | One different | All "
        "different |\n";
  os << "|---|------|-------|----------|--------------|---------------|-----"
        "---------|\n";
  int rownum = 0;
  for (size_t gi : idx) {
    const sf::QueryGroup& g = gf.groups[gi];
    const sf::QueryPair& qp = g.pairs[rng.uniform(g.pairs.size())];
    const sf::EvidenceRef& ref = qp.candidates[rng.uniform(qp.candidates.size())];
    const sf::Sentence* qs = store.find_sentence(g.query);
    std::string qtext = qs ? highlight(qs->text, qp.lo_at.start, qp.lo_at.end,
                                       qp.hi_at.start, qp.hi_at.end)
                           : "<missing>";
    std::string etext;
    if (ref.kind == sf::EvidenceKind::Text) {
      const sf::Sentence* es = store.find_sentence(ref.sent);
      etext = es ? highlight(es->text, ref.lo_at.start, ref.lo_at.end,
                             ref.hi_at.start, ref.hi_at.end)
                 : "<missing>";
    } else {
      const sf::Table* t = store.find_table(ref.table);
      if (t) {
        for (int c = 0; c < t->n_cols(); ++c) {
          if (c) etext += " \\| ";
          std::string cell = t->rows[ref.row][c].text;
          if (c == ref.lo_at.col || c == ref.hi_at.col)
            cell = "**" + cell + "**";
          etext += cell;
        }
      } else {
        etext = "<missing>";
      }
    }
    os << "| " << ++rownum << " | " << qp.pair.str() << " | " << qtext
       << " | " << etext << " |  |  |  |\n";
  }
  std::cerr << "wrote " << rownum << "-row audit sheet -> " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"span-reasoning pre-training pipeline"};
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ing = app.add_subcommand("ingest", "parse and enrich a corpus");
  ing->add_option("--corpus", ia.corpus, "corpus JSONL")->required();
  ing->add_option("--out", ia.out, "output store path")->required();
  ing->add_option("--threads", ia.threads, "worker threads");

  PairArgs pa;
  auto* pr = app.add_subcommand("pair", "build query candidate groups");
  pr->add_option("--store", pa.store, "ingested store")->required();
  pr->add_option("--profile", pa.profile, "text|hybrid");
  pr->add_option("--out", pa.out, "output groups JSONL")->required();
  pr->add_option("--threads", pa.threads, "worker threads");

  GenArgs ga;
  auto* gn = app.add_subcommand("gen", "generate pre-training examples");
  gn->add_option("--groups", ga.groups, "groups JSONL")->required();
  gn->add_option("--store", ga.store, "ingested store")->required();
  gn->add_option("--seed", ga.seed, "sampling seed");
  gn->add_option("--out", ga.out, "output examples JSONL")->required();
  gn->add_option("--profile", ga.profile, "override groups profile");
  gn->add_option("--per-group", ga.per_group, "examples per query group");
  gn->add_option("--config", ga.config_path, "budget config file");
  gn->add_flag("--no-mlm", ga.no_mlm, "disable MLM targets");
  gn->add_flag("--no-unanswerable", ga.no_unanswerable,
               "disable unanswerable slots");
  gn->add_flag("--single-evidence", ga.single_evidence,
               "one evidence piece per example");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-toy", "small-scale training run");
  tr->add_option("--examples", ta.examples, "examples JSONL")->required();
  tr->add_option("--config", ta.config_path, "flat key=value config");
  tr->add_option("--seed", ta.seed, "initialization/order seed");
  tr->add_option("--out", ta.out, "output parameter file")->required();
  tr->add_option("--trace", ta.trace, "loss trace JSONL path");
  tr->add_option("--threads", ta.threads, "worker threads");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate on a QA dataset");
  ev->add_option("--params", ea.params, "trained parameter file");
  ev->add_option("--dataset", ea.dataset, "QA dataset JSONL")->required();
  ev->add_option("--mode", ea.mode, "single|hotpot|table|hybrid");
  ev->add_option("--out", ea.out, "report JSON path")->required();
  ev->add_flag("--oracle", ea.oracle, "use the gold-answer oracle scorer");
  ev->add_option("--threads", ea.threads, "worker threads");

  StatsArgs sa;
  auto* st = app.add_subcommand("stats", "count report for an artifact");
  st->add_option("--input", sa.input, "store/groups/examples artifact")
      ->required();
  st->add_option("--out", sa.out, "write JSON report here instead of stdout");

  AuditArgs aa;
  auto* au = app.add_subcommand("audit", "render a manual-labeling sheet");
  au->add_option("--groups", aa.groups, "groups JSONL")->required();
  au->add_option("--store", aa.store, "ingested store")->required();
  au->add_option("--n", aa.n, "rows to sample");
  au->add_option("--seed", aa.seed, "sampling seed");
  au->add_option("--out", aa.out, "output sheet path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 2;
  }

  try {
    if (*ing) cmd_ingest(ia);
    if (*pr) cmd_pair(pa);
    if (*gn) cmd_gen(ga);
    if (*tr) cmd_train(ta);
    if (*ev) cmd_eval(ea);
    if (*st) cmd_stats(sa);
    if (*au) cmd_audit(aa);
  } catch (const sf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
