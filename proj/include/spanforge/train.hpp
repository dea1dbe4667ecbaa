#pragma once

// Small-scale training loop: seeded init, deterministic minibatch AdamW,
// per-step loss trace, final training-set slot accuracy.

#include <numeric>
#include <string>
#include <vector>

#include "spanforge/example_gen.hpp"
#include "spanforge/model.hpp"
#include "spanforge/optim.hpp"
#include "spanforge/tokenizer.hpp"

namespace spanforge {

struct TrainConfig {
  ModelConfig model;
  AdamWConfig adamw;
  int steps = 500;
  int batch_size = 8;
  uint64_t seed = 0;
  int threads = 1;

  json to_json() const {
    return json{{"model", model.to_json()},
                {"lr", adamw.lr},
                {"beta1", adamw.beta1},
                {"beta2", adamw.beta2},
                {"eps", adamw.eps},
                {"weight_decay", adamw.weight_decay},
                {"steps", steps},
                {"batch_size", batch_size},
                {"seed", seed}};
  }
  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("lr")) c.adamw.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) c.adamw.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.adamw.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.adamw.eps = j.at("eps").get<double>();
    if (j.contains("weight_decay"))
      c.adamw.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    return c;
  }
};

struct StepRecord {
  int step = 0;
  LossReport loss;  // batch mean
};

struct TrainResult {
  ModelParams params;
  std::vector<StepRecord> trace;
  double slot_em = 0.0;  // training-set slot accuracy after the last step
  int n_slots = 0;
};

// A slot prediction is correct when the ranked argmax span's token ids equal
// the tokenization of the gold surface, or the null answer meets an
// unanswerable slot.
inline bool slot_correct(const ModelParams& p, const Mat& H,
                         const PretrainExample& ex, const QuestionSlot& slot,
                         const Vocab& vocab) {
  SpanDistributions d =
      span_scores(H, p.get("head.Ws"), p.get("head.We"), ex, slot);
  std::vector<RankedSpan> ranked = rank_spans(d.f_start, d.f_end, d.domain);
  std::optional<RankedSpan> top = best_span(ranked);
  if (!slot.answerable) return !top.has_value();
  if (!top) return false;
  std::vector<int> pred;
  for (int pos = top->start; pos <= top->end; ++pos)
    pred.push_back(ex.token_ids[pos]);
  return pred == vocab.encode(slot.gold_surface);
}

inline double slot_em(const ModelParams& p,
                      const std::vector<PretrainExample>& examples,
                      const Vocab& vocab, int* n_slots_out = nullptr) {
  int total = 0, correct = 0;
  for (const PretrainExample& ex : examples) {
    Mat H = encode(p, ex);
    for (const QuestionSlot& slot : ex.slots) {
      ++total;
      if (slot_correct(p, H, ex, slot, vocab)) ++correct;
    }
  }
  if (n_slots_out) *n_slots_out = total;
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

inline TrainResult train_toy(const std::vector<PretrainExample>& examples,
                             const TrainConfig& cfg, const Vocab& vocab) {
  if (examples.empty()) throw ShapeMismatch("no training examples");
  TrainResult res;
  res.params = ModelParams::make(cfg.model);
  res.params.init(cfg.seed);
  AdamW opt(res.params, cfg.adamw);

  Rng order_rng(hash_combine(fnv1a("batch-order"), cfg.seed));
  std::vector<int> perm(examples.size());
  std::iota(perm.begin(), perm.end(), 0);
  size_t cursor = perm.size();  // forces an initial shuffle

  int batch = std::min<int>(cfg.batch_size, static_cast<int>(examples.size()));
  Grads acc = Grads::like(res.params);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<int> idx;
    for (int b = 0; b < batch; ++b) {
      if (cursor == perm.size()) {
        order_rng.shuffle(perm);
        cursor = 0;
      }
      idx.push_back(perm[cursor++]);
    }

    acc.zero();
    std::vector<Grads> per(idx.size());
    std::vector<LossReport> losses(idx.size());
    parallel_for(idx.size(), cfg.threads, [&](size_t k) {
      per[k] = Grads::like(res.params);
      losses[k] = backward(res.params, examples[idx[k]], per[k]);
    });
    LossReport mean;
    double inv = 1.0 / static_cast<double>(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {  // fixed reduction order
      acc.add_scaled(per[k], inv);
      mean.l_sr += losses[k].l_sr * inv;
      mean.l_mlm += losses[k].l_mlm * inv;
    }
    if (!std::isfinite(mean.total()))
      throw Divergence("step " + std::to_string(step));
    opt.step(res.params, acc);
    res.trace.push_back({step, mean});
  }

  res.slot_em = slot_em(res.params, examples, vocab, &res.n_slots);
  return res;
}

}  // namespace spanforge
