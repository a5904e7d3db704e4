/*
 * Copyright (c) 2026 The typodr Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "typodr/common.hpp"
#include "typodr/data.hpp"
#include "typodr/encoder.hpp"
#include "typodr/losses.hpp"
#include "typodr/rng.hpp"
#include "typodr/typo_gen.hpp"

namespace typodr {

struct TrainingInstance {
  std::string query_id;
  std::string query_text;
  std::string positive_passage_id;
  std::vector<std::string> hard_negative_passage_ids;
  std::vector<std::string> typo_variants;
};

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t hard_negatives_per_query = 3;
  double learning_rate = 3e-4;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 2000;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  // Keep each instance's typo variants fixed for the whole run instead of
  // regenerating them every step.
  bool freeze_typos = false;

  void validate() const {
    if (batch_size < 2) throw InvalidInput("train config: batch_size must be >= 2");
    if (warmup_steps > total_steps)
      throw InvalidInput("train config: warmup_steps must be <= total_steps");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw InvalidInput("train config: learning_rate must be finite and >= 0");
    if (!(weight_decay >= 0.0)) throw InvalidInput("train config: weight_decay must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw InvalidInput("train config: adam betas must be in [0,1)");
    if (!(adam_epsilon > 0.0)) throw InvalidInput("train config: adam_epsilon must be > 0");
  }
};

// Linear warmup to the base rate, then linear decay to zero at total_steps.
inline double lr_at_step(const TrainConfig& cfg, std::size_t step) {
  if (step > cfg.total_steps)
    throw InvalidInput("lr_at_step: step " + std::to_string(step) + " beyond total_steps " +
                       std::to_string(cfg.total_steps));
  const double base = cfg.learning_rate;
  if (step == cfg.total_steps) return 0.0;
  if (step < cfg.warmup_steps)
    return base * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return base * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

// ---------------------------------------------------------------------------
// Gradients and optimizer

// Dense parameter gradients, one entry per tower.
struct ModelGrads {
  std::vector<EncoderParams> towers;

  static ModelGrads zeros_like(const DualEncoder& m) {
    ModelGrads g;
    g.towers.assign(m.towers.size(), EncoderParams::zeros(m.config));
    return g;
  }

  void add(std::size_t tower, const EncoderGrads& eg) {
    auto& t = towers[tower];
    const std::size_t d = t.embedding.cols;
    for (const auto& [row, vals] : eg.embedding_rows) {
      double* dst = t.embedding.row(row);
      for (std::size_t j = 0; j < d; ++j) dst[j] += vals[j];
    }
    for (std::size_t i = 0; i < t.projection.data.size(); ++i)
      t.projection.data[i] += eg.projection.data[i];
    for (std::size_t i = 0; i < d; ++i) t.projection_bias[i] += eg.projection_bias[i];
  }
};

struct ParamGroup {
  std::string name;
  std::span<double> values;
};

inline std::vector<ParamGroup> param_groups(EncoderParams& p, std::size_t tower) {
  const std::string t = "tower" + std::to_string(tower) + ".";
  return {{t + "embedding", p.embedding.data},
          {t + "projection", p.projection.data},
          {t + "projection_bias", p.projection_bias}};
}

struct OptimizerState {
  ModelGrads first_moment;
  ModelGrads second_moment;
  std::size_t step = 0;

  static OptimizerState for_model(const DualEncoder& m) {
    return {ModelGrads::zeros_like(m), ModelGrads::zeros_like(m), 0};
  }
};

// One AdamW update of a parameter array at step t (1-based):
//   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//   x -= lr * wd * x                         (decoupled decay)
//   x -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
inline void adamw_update(std::span<double> x, std::span<const double> g, std::span<double> m,
                         std::span<double> v, std::size_t t, double lr, const TrainConfig& cfg) {
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    x[i] *= decay;
    x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_epsilon);
  }
}

// Applies AdamW to every parameter group. A non-finite gradient aborts the
// whole step before anything is modified.
inline void optimizer_step(DualEncoder& model, ModelGrads& grads, OptimizerState& state, double lr,
                           const TrainConfig& cfg) {
  if (grads.towers.size() != model.towers.size() ||
      state.first_moment.towers.size() != model.towers.size())
    throw InvalidInput("optimizer_step: tower count mismatch");
  for (std::size_t t = 0; t < model.towers.size(); ++t) {
    for (auto& g : param_groups(grads.towers[t], t))
      for (double x : g.values)
        if (!std::isfinite(x))
          throw NumericalError("optimizer_step: non-finite gradient in " + g.name);
  }
  ++state.step;
  for (std::size_t t = 0; t < model.towers.size(); ++t) {
    auto xs = param_groups(model.towers[t], t);
    auto gs = param_groups(grads.towers[t], t);
    auto ms = param_groups(state.first_moment.towers[t], t);
    auto vs = param_groups(state.second_moment.towers[t], t);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i].values.size() != gs[i].values.size())
        throw InvalidInput("optimizer_step: shape mismatch in " + xs[i].name);
      adamw_update(xs[i].values, gs[i].values, ms[i].values, vs[i].values, state.step, lr, cfg);
    }
  }
}

// ---------------------------------------------------------------------------
// Batch forward / backward

struct EncodedText {
  TokenBag bag;
  std::vector<double> vec;
};

inline EncodedText encode_text(const DualEncoder& m, const std::string& text, Side side) {
  EncodedText e{tokenize(text, m.config), {}};
  e.vec = encode(m.tower(side), e.bag);
  return e;
}

// Texts of one batch. The passage pool is every query's positive followed by
// its hard negatives, deduplicated by passage id (first occurrence wins).
struct BatchTexts {
  std::vector<std::string> queries;
  std::vector<std::vector<std::string>> typoed;  // [B][K]
  std::vector<std::string> passage_ids;
  std::vector<std::string> passages;
  std::vector<std::size_t> positive_index;
  std::size_t duplicates_removed = 0;
};

inline BatchTexts assemble_batch(std::span<const TrainingInstance> instances,
                                 const TextMap& collection) {
  if (instances.size() < 2) throw InvalidInput("build_batch: need at least 2 instances");
  BatchTexts bt;
  const std::size_t k = instances.front().typo_variants.size();
  std::map<std::string, std::size_t> column;
  auto add = [&](const std::string& pid) {
    auto [it, inserted] = column.try_emplace(pid, bt.passage_ids.size());
    if (!inserted) {
      ++bt.duplicates_removed;
      return it->second;
    }
    auto text = collection.find(pid);
    if (text == collection.end()) throw DataError("build_batch: unknown passage id " + pid);
    bt.passage_ids.push_back(pid);
    bt.passages.push_back(text->second);
    return it->second;
  };
  for (const auto& inst : instances) {
    if (inst.typo_variants.size() != k)
      throw InvalidInput("build_batch: instances disagree on the number of typo variants");
    for (const auto& n : inst.hard_negative_passage_ids)
      if (n == inst.positive_passage_id)
        throw InvalidInput("build_batch: rejected batch, positive " + n + " of query " +
                           inst.query_id + " is also one of its negatives");
    bt.queries.push_back(inst.query_text);
    bt.typoed.push_back(inst.typo_variants);
    bt.positive_index.push_back(add(inst.positive_passage_id));
    for (const auto& n : inst.hard_negative_passage_ids) add(n);
  }
  return bt;
}

// Encodings plus scores for one batch; keeps what backward needs.
struct BatchForward {
  std::vector<EncodedText> queries;
  std::vector<std::vector<EncodedText>> typoed;
  std::vector<EncodedText> passages;
  BatchScores scores;
};

inline BatchForward forward_batch(const DualEncoder& m, const BatchTexts& bt,
                                  bool with_query_pairs) {
  BatchForward f;
  const std::size_t nq = bt.queries.size(), np = bt.passages.size();
  const std::size_t k = bt.typoed.empty() ? 0 : bt.typoed.front().size();
  for (const auto& q : bt.queries) f.queries.push_back(encode_text(m, q, Side::Query));
  f.typoed.resize(nq);
  for (std::size_t i = 0; i < nq; ++i)
    for (const auto& t : bt.typoed[i]) f.typoed[i].push_back(encode_text(m, t, Side::Query));
  for (const auto& p : bt.passages) f.passages.push_back(encode_text(m, p, Side::Passage));

  auto& s = f.scores;
  s.positive_index = bt.positive_index;
  s.qp = Matrix(nq, np);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < np; ++j) s.qp(i, j) = dot(f.queries[i].vec, f.passages[j].vec);
  if (k > 0) {
    for (std::size_t i = 0; i < nq; ++i) {
      Matrix t(k, np);
      for (std::size_t v = 0; v < k; ++v)
        for (std::size_t j = 0; j < np; ++j) t(v, j) = dot(f.typoed[i][v].vec, f.passages[j].vec);
      s.tqp.push_back(std::move(t));
    }
  }
  if (with_query_pairs) {
    s.qq = Matrix(nq, nq);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < nq; ++j) s.qq(i, j) = dot(f.queries[i].vec, f.queries[j].vec);
    s.qt = Matrix(nq, k);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t v = 0; v < k; ++v) s.qt(i, v) = dot(f.queries[i].vec, f.typoed[i][v].vec);
  }
  return f;
}

// Chains score gradients through the dot products and encoders.
inline ModelGrads backward_batch(const DualEncoder& m, const BatchForward& f, const BatchGrads& g) {
  const std::size_t nq = f.queries.size(), np = f.passages.size();
  const std::size_t d = m.config.embed_dim;
  auto axpy = [d](std::vector<double>& y, double a, const std::vector<double>& x) {
    if (a == 0.0) return;
    for (std::size_t i = 0; i < d; ++i) y[i] += a * x[i];
  };
  std::vector<std::vector<double>> dq(nq, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> dp(np, std::vector<double>(d, 0.0));
  std::vector<std::vector<std::vector<double>>> dt(nq);
  for (std::size_t i = 0; i < nq; ++i)
    dt[i].assign(f.typoed[i].size(), std::vector<double>(d, 0.0));

  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < np; ++j) {
      axpy(dq[i], g.qp(i, j), f.passages[j].vec);
      axpy(dp[j], g.qp(i, j), f.queries[i].vec);
    }
  for (std::size_t i = 0; i < g.tqp.size(); ++i)
    for (std::size_t v = 0; v < g.tqp[i].rows; ++v)
      for (std::size_t j = 0; j < np; ++j) {
        axpy(dt[i][v], g.tqp[i](v, j), f.passages[j].vec);
        axpy(dp[j], g.tqp[i](v, j), f.typoed[i][v].vec);
      }
  if (!g.qq.empty())
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < nq; ++j) {
        axpy(dq[i], g.qq(i, j), f.queries[j].vec);
        axpy(dq[j], g.qq(i, j), f.queries[i].vec);
      }
  if (!g.qt.empty())
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t v = 0; v < g.qt.cols; ++v) {
        axpy(dq[i], g.qt(i, v), f.typoed[i][v].vec);
        axpy(dt[i][v], g.qt(i, v), f.queries[i].vec);
      }

  ModelGrads out = ModelGrads::zeros_like(m);
  const std::size_t qt = m.tower_index(Side::Query), pt = m.tower_index(Side::Passage);
  for (std::size_t i = 0; i < nq; ++i) {
    out.add(qt, encode_backward(m.towers[qt], f.queries[i].bag, dq[i]));
    for (std::size_t v = 0; v < dt[i].size(); ++v)
      out.add(qt, encode_backward(m.towers[qt], f.typoed[i][v].bag, dt[i][v]));
  }
  for (std::size_t j = 0; j < np; ++j)
    out.add(pt, encode_backward(m.towers[pt], f.passages[j].bag, dp[j]));
  return out;
}

// build_batch: texts -> scores under the current encoder.
inline BatchScores build_batch(std::span<const TrainingInstance> instances,
                               const TextMap& collection, const DualEncoder& model,
                               bool with_query_pairs = false,
                               std::size_t* duplicates_removed = nullptr) {
  const auto bt = assemble_batch(instances, collection);
  if (duplicates_removed) *duplicates_removed = bt.duplicates_removed;
  return forward_batch(model, bt, with_query_pairs).scores;
}

// DR_CL's single typoed positive for a step.
inline std::size_t sampled_variant(const MethodConfig& method, std::uint64_t seed,
                                   std::size_t step) {
  if (method.k == 0) return 0;
  if (method.cl_sampling == VariantSampling::RoundRobin) return step % method.k;
  return static_cast<std::size_t>(derive_seed(seed, {0x636cULL, step}) % method.k);
}

struct StepResult {
  MethodLoss loss;
  ModelGrads grads;
};

// Loss and parameter gradients for one batch of texts. `teacher_qp` pins the
// self-teaching targets (gradient checks hold them fixed while perturbing).
inline StepResult batch_step(const DualEncoder& model, const BatchTexts& bt,
                             const MethodConfig& method, std::size_t variant,
                             const Matrix* teacher_qp = nullptr) {
  const auto f = forward_batch(model, bt, uses_query_pairs(method.method));
  StepResult r{method_loss(method, f.scores, variant, teacher_qp), {}};
  r.grads = backward_batch(model, f, r.loss.grads);
  return r;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainLogEntry {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  DualEncoder model;
  std::vector<TrainLogEntry> log;
  std::size_t duplicate_passages = 0;  // dedup warnings over the run
  std::size_t no_op_augmentations = 0;
};

// Stream ids for derive_seed.
inline constexpr std::uint64_t kSeedInit = 0x696e6974ULL;
inline constexpr std::uint64_t kSeedShuffle = 0x73687566ULL;
inline constexpr std::uint64_t kSeedTypo = 0x7479706fULL;

inline std::vector<TrainingInstance> instances_from(const Dataset& data,
                                                    std::size_t hard_negatives) {
  std::vector<TrainingInstance> out;
  for (const auto& t : data.triples) {
    auto q = data.queries.find(t.qid);
    if (q == data.queries.end()) throw DataError("training triple references unknown qid " + t.qid);
    if (t.neg_pids.size() < hard_negatives)
      throw DataError("training triple for qid " + t.qid + " has " +
                      std::to_string(t.neg_pids.size()) + " negatives, need " +
                      std::to_string(hard_negatives));
    TrainingInstance inst{t.qid, q->second, t.pos_pid, {}, {}};
    inst.hard_negative_passage_ids.assign(t.neg_pids.begin(),
                                          t.neg_pids.begin() + static_cast<std::ptrdiff_t>(hard_negatives));
    out.push_back(std::move(inst));
  }
  return out;
}

using StepCallback = std::function<void(const TrainLogEntry&)>;

// In-batch-negative training. Everything random (init, batch order, typos,
// DR_CL's variant) derives from config.seed.
inline TrainResult train(const Dataset& data, const MethodConfig& method, const TrainConfig& config,
                         const EncoderConfig& encoder_config, const AugmentationPolicy& policy,
                         const StepCallback& on_step = {}) {
  config.validate();
  method.validate();
  encoder_config.validate();
  policy.validate();
  auto instances = instances_from(data, config.hard_negatives_per_query);
  if (instances.size() < config.batch_size)
    throw InvalidInput("train: dataset has " + std::to_string(instances.size()) +
                       " instances, fewer than batch_size " + std::to_string(config.batch_size));

  TrainResult res{DualEncoder::random(encoder_config, derive_seed(config.seed, {kSeedInit})), {}, 0, 0};
  auto state = OptimizerState::for_model(res.model);
  const std::size_t k = uses_typos(method.method) ? method.k : 0;
  const std::size_t per_epoch = instances.size() / config.batch_size;

  std::vector<std::size_t> order(instances.size());
  std::vector<TrainingInstance> batch(config.batch_size);
  for (std::size_t step = 0; step < config.total_steps; ++step) {
    const std::size_t epoch = step / per_epoch, slot = step % per_epoch;
    if (slot == 0) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      SplitMix64 rng(derive_seed(config.seed, {kSeedShuffle, epoch}));
      seeded_shuffle(order, rng);
    }
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t idx = order[slot * config.batch_size + b];
      batch[b] = instances[idx];
      if (k > 0) {
        AugmentationPolicy p = policy;
        p.k = k;
        p.seed = config.freeze_typos ? derive_seed(config.seed, {kSeedTypo, idx})
                                     : derive_seed(config.seed, {kSeedTypo, idx, step});
        auto aug = generate_variants(batch[b].query_text, p);
        if (aug.no_op_warning) ++res.no_op_augmentations;
        batch[b].typo_variants = std::move(aug.variants);
      }
    }
    const auto bt = assemble_batch(batch, data.collection);
    res.duplicate_passages += bt.duplicates_removed;
    StepResult r;
    try {
      r = batch_step(res.model, bt, method, sampled_variant(method, config.seed, step));
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    if (!std::isfinite(r.loss.loss))
      throw NumericalError("train: non-finite loss at step " + std::to_string(step));
    const double lr = lr_at_step(config, step);
    try {
      optimizer_step(res.model, r.grads, state, lr, config);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    TrainLogEntry entry{step, r.loss.loss, lr};
    res.log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return res;
}

}  // namespace typodr
