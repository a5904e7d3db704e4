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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "typodr/common.hpp"

namespace typodr {

// Floor applied to probabilities before taking logs in the KL terms.
inline constexpr double kProbFloor = 1e-12;

struct ScoreSet {
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
};

struct ScoreDistribution {
  std::vector<double> probs;
};

// Loss with gradients laid out like the ScoreSet it was computed from.
struct ScoreLoss {
  double loss = 0.0;
  std::vector<double> pos_grad;
  std::vector<double> neg_grad;
};

namespace detail {

inline void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs)
    if (!std::isfinite(x)) throw NumericalError(std::string(what) + ": non-finite score");
}

inline double log_sum_exp(std::span<const double> xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// log(1 + e^x)
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// 1 / (1 + e^-x)
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline ScoreDistribution softmax_distribution(std::span<const double> scores) {
  if (scores.empty()) throw InvalidInput("softmax_distribution: empty scores");
  detail::require_finite(scores, "softmax_distribution");
  const double m = *std::max_element(scores.begin(), scores.end());
  ScoreDistribution d;
  d.probs.resize(scores.size());
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) s += (d.probs[i] = std::exp(scores[i] - m));
  for (auto& p : d.probs) p /= s;
  return d;
}

// Multi-positive contrastive loss: the mean over positives of
//   -log(e^{s+} / (e^{s+} + sum_i e^{s-_i})).
// Other positives never enter a positive's denominator. Each term is evaluated
// as softplus(lse(negatives) - s+).
inline ScoreLoss mce_loss(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty()) throw InvalidInput("mce_loss: no positive scores");
  if (neg.empty()) throw InvalidInput("mce_loss: no negative scores");
  detail::require_finite(pos, "mce_loss");
  detail::require_finite(neg, "mce_loss");

  const double lse_neg = detail::log_sum_exp(neg);
  const double inv_p = 1.0 / static_cast<double>(pos.size());
  ScoreLoss out;
  out.pos_grad.resize(pos.size());
  out.neg_grad.assign(neg.size(), 0.0);
  double total = 0.0;
  double neg_mass = 0.0;  // sum over positives of (1 - sigma_j)
  for (std::size_t j = 0; j < pos.size(); ++j) {
    const double x = lse_neg - pos[j];
    total += detail::softplus(x);
    const double miss = detail::sigmoid(x);
    out.pos_grad[j] = -miss * inv_p;
    neg_mass += miss;
  }
  out.loss = total * inv_p;
  const double scale = neg_mass * inv_p;
  for (std::size_t i = 0; i < neg.size(); ++i)
    out.neg_grad[i] = std::exp(neg[i] - lse_neg) * scale;
  return out;
}

inline ScoreLoss mce_loss(const ScoreSet& s) { return mce_loss(s.pos_scores, s.neg_scores); }

// Single-positive contrastive loss; shares its evaluation path with mce_loss,
// so the two agree bit-for-bit on one positive.
inline ScoreLoss ce_loss(double pos, std::span<const double> neg) {
  return mce_loss(std::span<const double>(&pos, 1), neg);
}

inline ScoreLoss ce_loss(const ScoreSet& s) {
  if (s.pos_scores.size() != 1)
    throw InvalidInput("ce_loss: expected exactly one positive, got " +
                       std::to_string(s.pos_scores.size()) + " (use mce_loss)");
  return ce_loss(s.pos_scores[0], s.neg_scores);
}

struct KlLoss {
  double loss = 0.0;
  // grads[k][i] = d loss / d (score i underlying typoed distribution k)
  std::vector<std::vector<double>> grads;
};

// (1/K) sum_k KL(typoed_k || clean), with the clean distribution as a fixed
// target. Probabilities are floored at kProbFloor before the log. Gradients
// are taken through the softmax that produced each typoed distribution:
//   d/dz_i = q_i (g_i - sum_j q_j g_j),  g_i = dKL/dq_i.
inline KlLoss kl_self_teaching(std::span<const ScoreDistribution> typoed,
                               const ScoreDistribution& clean) {
  if (typoed.empty()) throw InvalidInput("kl_self_teaching: no typoed distributions");
  const std::size_t n = clean.probs.size();
  std::vector<double> log_clean(n);
  for (std::size_t i = 0; i < n; ++i) log_clean[i] = std::log(std::max(clean.probs[i], kProbFloor));

  KlLoss out;
  out.grads.resize(typoed.size());
  const double inv_k = 1.0 / static_cast<double>(typoed.size());
  double total = 0.0;
  std::vector<double> g(n);
  for (std::size_t k = 0; k < typoed.size(); ++k) {
    const auto& q = typoed[k].probs;
    if (q.size() != n)
      throw InvalidInput("kl_self_teaching: distribution " + std::to_string(k) + " has length " +
                         std::to_string(q.size()) + ", expected " + std::to_string(n));
    double kl = 0.0;
    double mean_g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double log_q = std::log(std::max(q[i], kProbFloor));
      kl += q[i] * (log_q - log_clean[i]);
      g[i] = log_q - log_clean[i] + (q[i] > kProbFloor ? 1.0 : 0.0);
      mean_g += q[i] * g[i];
    }
    total += kl;
    auto& gk = out.grads[k];
    gk.resize(n);
    for (std::size_t i = 0; i < n; ++i) gk[i] = q[i] * (g[i] - mean_g) * inv_k;
  }
  out.loss = total * inv_k;
  return out;
}

enum class Method : std::uint8_t { DR, DR_CL, DR_CL_M, DR_DL, DR_DL_M, DR_ST_DL, DR_ST_DL_M };

inline constexpr Method kAllMethods[] = {Method::DR,      Method::DR_CL,    Method::DR_CL_M,
                                         Method::DR_DL,   Method::DR_DL_M,  Method::DR_ST_DL,
                                         Method::DR_ST_DL_M};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::DR: return "dr";
    case Method::DR_CL: return "dr_cl";
    case Method::DR_CL_M: return "dr_cl_m";
    case Method::DR_DL: return "dr_dl";
    case Method::DR_DL_M: return "dr_dl_m";
    case Method::DR_ST_DL: return "dr_st_dl";
    case Method::DR_ST_DL_M: return "dr_st_dl_m";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  const std::string s = to_lower(name);
  for (auto m : kAllMethods)
    if (s == to_string(m)) return m;
  throw InvalidInput("unknown method '" + std::string(name) +
                     "' (expected dr, dr_cl, dr_cl_m, dr_dl, dr_dl_m, dr_st_dl, dr_st_dl_m)");
}

// Methods that consume typoed queries.
inline bool uses_typos(Method m) { return m != Method::DR && m != Method::DR_DL; }

// Methods with the query-to-query contrastive term.
inline bool uses_query_pairs(Method m) { return m == Method::DR_CL || m == Method::DR_CL_M; }

inline bool is_multi_positive(Method m) {
  return m == Method::DR_CL_M || m == Method::DR_DL_M || m == Method::DR_ST_DL_M;
}

// Single-positive counterpart of a multi-positive method.
inline std::optional<Method> single_positive_counterpart(Method m) {
  switch (m) {
    case Method::DR_CL_M: return Method::DR_CL;
    case Method::DR_DL_M: return Method::DR_DL;
    case Method::DR_ST_DL_M: return Method::DR_ST_DL;
    default: return std::nullopt;
  }
}

enum class VariantSampling : std::uint8_t { RoundRobin, Seeded };

struct MethodConfig {
  Method method = Method::DR;
  double w1 = 0.5;
  double w2 = 0.5;
  double w = 0.5;
  double beta = 0.5;
  double gamma = 0.5;
  double sigma = 0.5;
  std::size_t k = 8;
  // How DR_CL picks its single typoed positive at each step.
  VariantSampling cl_sampling = VariantSampling::RoundRobin;

  void validate() const {
    for (double x : {w1, w2, w, beta, gamma, sigma})
      if (!std::isfinite(x)) throw InvalidInput("method config: non-finite weight");
    for (double x : {beta, gamma, sigma})
      if (x < 0.0 || x > 1.0) throw InvalidInput("method config: beta, gamma, sigma must be in [0,1]");
    if (uses_typos(method) && k < 1)
      throw InvalidInput(std::string("method config: ") + to_string(method) + " requires k >= 1");
  }
};

// Scores of one training batch. B queries, P pool passages, K typoed variants
// per query.
struct BatchScores {
  Matrix qp;                // [B x P] clean query -> passage
  std::vector<Matrix> tqp;  // B entries of [K x P], typoed query -> passage
  Matrix qq;                // [B x B] clean query -> clean query (diagonal unused)
  Matrix qt;                // [B x K] clean query -> its own typoed variants
  std::vector<std::size_t> positive_index;  // per query, its positive column of qp

  std::size_t num_queries() const { return qp.rows; }
  std::size_t num_passages() const { return qp.cols; }
  std::size_t num_variants() const { return tqp.empty() ? 0 : tqp.front().rows; }
};

struct BatchGrads {
  Matrix qp;
  std::vector<Matrix> tqp;
  Matrix qq;
  Matrix qt;

  static BatchGrads like(const BatchScores& b) {
    BatchGrads g;
    g.qp = Matrix(b.qp.rows, b.qp.cols);
    for (const auto& t : b.tqp) g.tqp.emplace_back(t.rows, t.cols);
    g.qq = Matrix(b.qq.rows, b.qq.cols);
    g.qt = Matrix(b.qt.rows, b.qt.cols);
    return g;
  }
};

// The five sub-losses (batch means); absent terms stay 0.
struct LossTerms {
  double passage_ce = 0.0;  // query -> passages, one positive
  double typo_cl = 0.0;     // query -> its typoed variants vs other queries
  double dual = 0.0;        // positive passage -> queries
  double passage_kl = 0.0;  // typoed vs clean distribution over passages
  double query_kl = 0.0;    // typoed vs clean distribution over queries
};

struct MethodLoss {
  double loss = 0.0;
  LossTerms terms;
  BatchGrads grads;
};

namespace detail {

inline void validate_batch(const BatchScores& b, const MethodConfig& cfg) {
  const std::size_t nq = b.num_queries(), np = b.num_passages();
  if (nq < 2) throw InvalidInput("method_loss: batch needs at least 2 queries");
  if (b.positive_index.size() != nq)
    throw InvalidInput("method_loss: positive_index length does not match queries");
  for (auto p : b.positive_index)
    if (p >= np) throw InvalidInput("method_loss: positive index out of range");
  if (np < 2) throw InvalidInput("method_loss: batch needs at least 2 passages");
  detail::require_finite(b.qp.data, "method_loss");
  if (uses_typos(cfg.method)) {
    if (b.tqp.size() != nq)
      throw InvalidInput(std::string("method_loss: ") + to_string(cfg.method) +
                         " requires typoed query scores");
    const std::size_t k = b.tqp.front().rows;
    if (k < 1) throw InvalidInput("method_loss: typoed scores have no variants");
    for (const auto& t : b.tqp) {
      if (t.rows != k || t.cols != np) throw InvalidInput("method_loss: inconsistent tqp shape");
      detail::require_finite(t.data, "method_loss");
    }
  }
  if (uses_query_pairs(cfg.method)) {
    const std::size_t k = b.num_variants();
    if (b.qq.rows != nq || b.qq.cols != nq || b.qt.rows != nq || b.qt.cols != k)
      throw InvalidInput(std::string("method_loss: ") + to_string(cfg.method) +
                         " requires query-query and query-variant scores");
    detail::require_finite(b.qq.data, "method_loss");
    detail::require_finite(b.qt.data, "method_loss");
  }
}

// Mean over queries of the one-positive loss on each qp row.
inline double passage_ce(const BatchScores& b, BatchGrads& g, double weight) {
  const std::size_t nq = b.num_queries(), np = b.num_passages();
  const double scale = weight / static_cast<double>(nq);
  double total = 0.0;
  std::vector<double> neg;
  for (std::size_t i = 0; i < nq; ++i) {
    const std::size_t pos = b.positive_index[i];
    neg.clear();
    for (std::size_t j = 0; j < np; ++j)
      if (j != pos) neg.push_back(b.qp(i, j));
    const auto r = ce_loss(b.qp(i, pos), neg);
    total += r.loss;
    g.qp(i, pos) += scale * r.pos_grad[0];
    for (std::size_t j = 0, n = 0; j < np; ++j)
      if (j != pos) g.qp(i, j) += scale * r.neg_grad[n++];
  }
  return total / static_cast<double>(nq);
}

// Query retrieval from each query's positive passage. Positives: the clean
// query, plus its typoed variants when multi_positive. Negatives: the other
// clean queries of the batch, skipping any that share the same positive.
inline double dual_task(const BatchScores& b, BatchGrads& g, double weight, bool multi_positive) {
  const std::size_t nq = b.num_queries();
  const double scale = weight / static_cast<double>(nq);
  double total = 0.0;
  std::vector<double> pos, neg;
  std::vector<std::size_t> neg_rows;
  for (std::size_t i = 0; i < nq; ++i) {
    const std::size_t c = b.positive_index[i];
    pos.assign(1, b.qp(i, c));
    const std::size_t k = multi_positive ? b.tqp[i].rows : 0;
    for (std::size_t v = 0; v < k; ++v) pos.push_back(b.tqp[i](v, c));
    neg.clear();
    neg_rows.clear();
    for (std::size_t j = 0; j < nq; ++j) {
      if (j == i || b.positive_index[j] == c) continue;
      neg.push_back(b.qp(j, c));
      neg_rows.push_back(j);
    }
    if (neg.empty())
      throw InvalidInput("method_loss: dual task has no negative queries for query " +
                         std::to_string(i));
    const auto r = mce_loss(pos, neg);
    total += r.loss;
    g.qp(i, c) += scale * r.pos_grad[0];
    for (std::size_t v = 0; v < k; ++v) g.tqp[i](v, c) += scale * r.pos_grad[v + 1];
    for (std::size_t n = 0; n < neg_rows.size(); ++n) g.qp(neg_rows[n], c) += scale * r.neg_grad[n];
  }
  return total / static_cast<double>(nq);
}

// Query vs its typoed variants (positives) and the other clean queries
// (negatives). `variant` selects the single positive; nullopt uses all K.
inline double typo_contrast(const BatchScores& b, BatchGrads& g, double weight,
                            std::optional<std::size_t> variant) {
  const std::size_t nq = b.num_queries();
  const std::size_t k = b.qt.cols;
  const double scale = weight / static_cast<double>(nq);
  double total = 0.0;
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < nq; ++i) {
    pos.clear();
    if (variant)
      pos.push_back(b.qt(i, *variant));
    else
      for (std::size_t v = 0; v < k; ++v) pos.push_back(b.qt(i, v));
    neg.clear();
    for (std::size_t j = 0; j < nq; ++j)
      if (j != i) neg.push_back(b.qq(i, j));
    const auto r = mce_loss(pos, neg);
    total += r.loss;
    if (variant)
      g.qt(i, *variant) += scale * r.pos_grad[0];
    else
      for (std::size_t v = 0; v < k; ++v) g.qt(i, v) += scale * r.pos_grad[v];
    for (std::size_t j = 0, n = 0; j < nq; ++j)
      if (j != i) g.qq(i, j) += scale * r.neg_grad[n++];
  }
  return total / static_cast<double>(nq);
}

// Self-teaching over passages: each typoed query's softmax over the pool
// against the clean query's softmax (teacher, held constant).
inline double passage_kl(const BatchScores& b, const Matrix& teacher, BatchGrads& g,
                         double weight) {
  const std::size_t nq = b.num_queries(), np = b.num_passages();
  const double scale = weight / static_cast<double>(nq);
  double total = 0.0;
  std::vector<ScoreDistribution> students;
  for (std::size_t i = 0; i < nq; ++i) {
    const auto clean = softmax_distribution(std::span<const double>(teacher.row(i), np));
    const auto& t = b.tqp[i];
    students.clear();
    for (std::size_t v = 0; v < t.rows; ++v)
      students.push_back(softmax_distribution(std::span<const double>(t.row(v), np)));
    const auto r = kl_self_teaching(students, clean);
    total += r.loss;
    for (std::size_t v = 0; v < t.rows; ++v)
      for (std::size_t j = 0; j < np; ++j) g.tqp[i](v, j) += scale * r.grads[v][j];
  }
  return total / static_cast<double>(nq);
}

// Self-teaching over queries: from query i's positive passage, the softmax over
// the batch's clean queries (teacher) against the same softmax with query i
// replaced by each of its typoed variants.
inline double query_kl(const BatchScores& b, const Matrix& teacher, BatchGrads& g, double weight) {
  const std::size_t nq = b.num_queries();
  const double scale = weight / static_cast<double>(nq);
  double total = 0.0;
  std::vector<double> column(nq), student(nq);
  std::vector<ScoreDistribution> students;
  for (std::size_t i = 0; i < nq; ++i) {
    const std::size_t c = b.positive_index[i];
    for (std::size_t j = 0; j < nq; ++j) column[j] = teacher(j, c);
    const auto clean = softmax_distribution(column);
    const auto& t = b.tqp[i];
    students.clear();
    for (std::size_t v = 0; v < t.rows; ++v) {
      for (std::size_t j = 0; j < nq; ++j) student[j] = b.qp(j, c);
      student[i] = t(v, c);
      students.push_back(softmax_distribution(student));
    }
    const auto r = kl_self_teaching(students, clean);
    total += r.loss;
    for (std::size_t v = 0; v < t.rows; ++v)
      for (std::size_t j = 0; j < nq; ++j) {
        if (j == i)
          g.tqp[i](v, c) += scale * r.grads[v][j];
        else
          g.qp(j, c) += scale * r.grads[v][j];
      }
  }
  return total / static_cast<double>(nq);
}

}  // namespace detail

// Composite objective of `cfg.method` over one batch, with exact gradients for
// every score. `sampled_variant` is DR_CL's typoed positive for this step.
// `teacher_qp`, when given, supplies the clean scores that define the
// self-teaching targets; by default the batch's own qp is used. Either way the
// targets are constants: no gradient flows through them.
inline MethodLoss method_loss(const MethodConfig& cfg, const BatchScores& batch,
                              std::size_t sampled_variant = 0,
                              const Matrix* teacher_qp = nullptr) {
  cfg.validate();
  detail::validate_batch(batch, cfg);
  MethodLoss out;
  out.grads = BatchGrads::like(batch);
  auto& t = out.terms;
  auto& g = out.grads;
  const Matrix& teacher = teacher_qp ? *teacher_qp : batch.qp;
  if (teacher_qp && (teacher.rows != batch.qp.rows || teacher.cols != batch.qp.cols))
    throw InvalidInput("method_loss: teacher scores shape mismatch");

  switch (cfg.method) {
    case Method::DR:
      t.passage_ce = detail::passage_ce(batch, g, 1.0);
      out.loss = t.passage_ce;
      break;
    case Method::DR_CL:
    case Method::DR_CL_M: {
      std::optional<std::size_t> variant;
      if (cfg.method == Method::DR_CL) {
        if (sampled_variant >= batch.num_variants())
          throw InvalidInput("method_loss: sampled variant out of range");
        variant = sampled_variant;
      }
      t.passage_ce = detail::passage_ce(batch, g, cfg.w1);
      t.typo_cl = detail::typo_contrast(batch, g, cfg.w2, variant);
      out.loss = cfg.w1 * t.passage_ce + cfg.w2 * t.typo_cl;
      break;
    }
    case Method::DR_DL:
    case Method::DR_DL_M:
      t.passage_ce = detail::passage_ce(batch, g, 1.0);
      t.dual = detail::dual_task(batch, g, cfg.w, cfg.method == Method::DR_DL_M);
      out.loss = t.passage_ce + cfg.w * t.dual;
      break;
    case Method::DR_ST_DL:
    case Method::DR_ST_DL_M: {
      const double b = cfg.beta, c = cfg.gamma, s = cfg.sigma;
      t.passage_ce = detail::passage_ce(batch, g, (1 - b) * (1 - c));
      t.dual = detail::dual_task(batch, g, (1 - b) * c, cfg.method == Method::DR_ST_DL_M);
      t.passage_kl = detail::passage_kl(batch, teacher, g, b * (1 - s));
      t.query_kl = detail::query_kl(batch, teacher, g, b * s);
      out.loss = (1 - b) * ((1 - c) * t.passage_ce + c * t.dual) +
                 b * ((1 - s) * t.passage_kl + s * t.query_kl);
      break;
    }
  }
  if (!std::isfinite(out.loss)) throw NumericalError("method_loss: non-finite loss");
  return out;
}

}  // namespace typodr
