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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "typodr/common.hpp"
#include "typodr/data.hpp"
#include "typodr/encoder.hpp"
#include "typodr/ranking.hpp"
#include "typodr/rng.hpp"
#include "typodr/typo_gen.hpp"

namespace typodr {

enum class MetricKind : std::uint8_t { MRR, Recall, NDCG, MAP };

// A metric with an optional rank cutoff; no cutoff means the whole run.
struct MetricSpec {
  MetricKind kind = MetricKind::MRR;
  std::optional<std::size_t> cutoff;

  std::string name() const {
    std::string n;
    switch (kind) {
      case MetricKind::MRR: n = "mrr"; break;
      case MetricKind::Recall: n = "recall"; break;
      case MetricKind::NDCG: n = "ndcg"; break;
      case MetricKind::MAP: n = "map"; break;
    }
    if (cutoff) n += "@" + std::to_string(*cutoff);
    return n;
  }
};

inline MetricSpec parse_metric(std::string_view text) {
  const std::string s = to_lower(text);
  const auto at = s.find('@');
  const std::string base = s.substr(0, at);
  MetricSpec m;
  if (base == "mrr") m.kind = MetricKind::MRR;
  else if (base == "recall" || base == "r") m.kind = MetricKind::Recall;
  else if (base == "ndcg") m.kind = MetricKind::NDCG;
  else if (base == "map") m.kind = MetricKind::MAP;
  else throw InvalidInput("unknown metric '" + std::string(text) + "'");
  if (at != std::string::npos) {
    const std::string k = s.substr(at + 1);
    if (k.empty() || k.find_first_not_of("0123456789") != std::string::npos || std::stoul(k) == 0)
      throw InvalidInput("bad metric cutoff in '" + std::string(text) + "'");
    m.cutoff = std::stoul(k);
  }
  return m;
}

inline std::vector<MetricSpec> parse_metric_list(std::string_view list) {
  std::vector<MetricSpec> out;
  std::size_t i = 0;
  while (i <= list.size()) {
    const auto j = std::min(list.find(',', i), list.size());
    const auto item = list.substr(i, j - i);
    if (!item.empty()) out.push_back(parse_metric(item));
    i = j + 1;
  }
  if (out.empty()) throw InvalidInput("empty metric list");
  return out;
}

struct MetricReport {
  std::string metric;
  double mean = 0.0;  // over queries (over repeats too for repeated evaluation)
  std::map<std::string, double, IdLess> per_query;
  std::size_t skipped_queries = 0;  // run queries without judgments
  std::size_t shallow_queries = 0;  // cutoff deeper than the run
  // Repeated evaluation only: one mean per repeat and their sample stddev.
  std::vector<double> per_repeat;
  double repeat_stddev = 0.0;
};

// Value of one metric for one ranked list.
inline double metric_value(const MetricSpec& spec, const std::vector<ScoredPassage>& ranked,
                           const std::map<std::string, int, IdLess>& judged) {
  const std::size_t depth =
      spec.cutoff ? std::min<std::size_t>(*spec.cutoff, ranked.size()) : ranked.size();
  auto grade = [&](std::size_t r) {
    auto it = judged.find(ranked[r].pid);
    return it == judged.end() ? 0 : it->second;
  };
  const double num_rel = static_cast<double>(judged.size());
  switch (spec.kind) {
    case MetricKind::MRR:
      for (std::size_t r = 0; r < depth; ++r)
        if (grade(r) > 0) return 1.0 / static_cast<double>(r + 1);
      return 0.0;
    case MetricKind::Recall: {
      std::size_t found = 0;
      for (std::size_t r = 0; r < depth; ++r) found += grade(r) > 0;
      return static_cast<double>(found) / num_rel;
    }
    case MetricKind::NDCG: {
      double dcg = 0.0;
      for (std::size_t r = 0; r < depth; ++r)
        if (int g = grade(r); g > 0) dcg += (std::exp2(g) - 1.0) / std::log2(r + 2.0);
      std::vector<int> ideal;
      for (const auto& [pid, g] : judged) ideal.push_back(g);
      std::sort(ideal.begin(), ideal.end(), std::greater<>());
      const std::size_t ideal_depth =
          spec.cutoff ? std::min<std::size_t>(*spec.cutoff, ideal.size()) : ideal.size();
      double idcg = 0.0;
      for (std::size_t r = 0; r < ideal_depth; ++r) idcg += (std::exp2(ideal[r]) - 1.0) / std::log2(r + 2.0);
      return idcg > 0.0 ? dcg / idcg : 0.0;
    }
    case MetricKind::MAP: {
      double sum = 0.0;
      std::size_t found = 0;
      for (std::size_t r = 0; r < depth; ++r)
        if (grade(r) > 0) sum += static_cast<double>(++found) / static_cast<double>(r + 1);
      return sum / num_rel;
    }
  }
  return 0.0;
}

inline MetricReport compute_metric(const MetricSpec& spec, const Run& run, const Qrels& qrels) {
  MetricReport rep;
  rep.metric = spec.name();
  double total = 0.0;
  for (const auto& [qid, ranked] : run) {
    auto j = qrels.find(qid);
    if (j == qrels.end() || j->second.empty()) {
      ++rep.skipped_queries;
      continue;
    }
    if (spec.cutoff && *spec.cutoff > ranked.size()) ++rep.shallow_queries;
    const double v = metric_value(spec, ranked, j->second);
    rep.per_query[qid] = v;
    total += v;
  }
  if (!rep.per_query.empty()) rep.mean = total / static_cast<double>(rep.per_query.size());
  return rep;
}

// Passage encodings, computed once per model.
struct PassageIndex {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vecs;
};

inline PassageIndex index_corpus(const DualEncoder& model, const TextMap& corpus) {
  if (corpus.empty()) throw InvalidInput("rank_corpus: empty corpus");
  PassageIndex idx;
  for (const auto& [pid, text] : corpus) {
    idx.ids.push_back(pid);
    idx.vecs.push_back(model.encode_text(text, Side::Passage));
  }
  return idx;
}

// Exhaustive dot-product retrieval; ties go to the smaller passage id.
inline Run rank_queries(const DualEncoder& model, const PassageIndex& index,
                        const TextMap& queries, std::size_t top_k) {
  if (top_k < 1) throw InvalidInput("rank_corpus: top_k must be >= 1");
  Run run;
  const std::size_t n = index.ids.size();
  std::vector<std::size_t> order(n);
  std::vector<double> scores(n);
  for (const auto& [qid, text] : queries) {
    const auto q = model.encode_text(text, Side::Query);
    for (std::size_t j = 0; j < n; ++j) scores[j] = dot(q, index.vecs[j]);
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    const std::size_t k = std::min(top_k, n);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (scores[a] != scores[b]) return scores[a] > scores[b];
                        return id_less(index.ids[a], index.ids[b]);
                      });
    auto& ranked = run[qid];
    for (std::size_t r = 0; r < k; ++r) ranked.push_back({index.ids[order[r]], scores[order[r]]});
  }
  return run;
}

inline Run rank_corpus(const DualEncoder& model, const TextMap& queries, const TextMap& corpus,
                       std::size_t top_k) {
  return rank_queries(model, index_corpus(model, corpus), queries, top_k);
}

// Run depth needed by a metric list; 0 means the whole corpus.
inline std::size_t required_depth(const std::vector<MetricSpec>& metrics, std::size_t corpus_size) {
  std::size_t depth = 0;
  for (const auto& m : metrics) {
    if (!m.cutoff) return corpus_size;
    depth = std::max(depth, *m.cutoff);
  }
  return std::min(depth, corpus_size);
}

// One typo per query (policy.k == 0 leaves queries untouched). Query qid in
// repeat r uses seed derive_seed(policy.seed, {r, fnv1a64(qid)}).
inline TextMap corrupt_queries(const TextMap& queries, const AugmentationPolicy& policy,
                               std::size_t repeat, std::size_t* warnings = nullptr) {
  if (policy.k == 0) return queries;
  TextMap out;
  for (const auto& [qid, text] : queries) {
    AugmentationPolicy p = policy;
    p.k = 1;
    p.seed = derive_seed(policy.seed, {repeat, fnv1a64(qid)});
    auto aug = generate_variants(text, p);
    if (aug.no_op_warning && warnings) ++*warnings;
    out.emplace(qid, std::move(aug.variants.front()));
  }
  return out;
}

struct RepeatedEval {
  std::vector<MetricReport> reports;  // one per metric
  std::size_t augmentation_warnings = 0;
};

// Corrupts every query `repeats` times and evaluates each corrupted set.
// per_query holds each query's mean over repeats; mean is the mean of the
// per-repeat means.
inline RepeatedEval repeated_typo_eval(const DualEncoder& model, const TextMap& clean_queries,
                                       const TextMap& corpus, const Qrels& qrels,
                                       std::size_t repeats, const AugmentationPolicy& policy,
                                       const std::vector<MetricSpec>& metrics) {
  if (repeats < 1) throw InvalidInput("repeated_typo_eval: repeats must be >= 1");
  const auto index = index_corpus(model, corpus);
  const std::size_t depth = required_depth(metrics, corpus.size());
  RepeatedEval out;
  out.reports.resize(metrics.size());
  for (std::size_t m = 0; m < metrics.size(); ++m) out.reports[m].metric = metrics[m].name();
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto queries = corrupt_queries(clean_queries, policy, r, &out.augmentation_warnings);
    const auto run = rank_queries(model, index, queries, depth);
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      const auto rep = compute_metric(metrics[m], run, qrels);
      auto& agg = out.reports[m];
      agg.per_repeat.push_back(rep.mean);
      agg.skipped_queries = rep.skipped_queries;
      agg.shallow_queries = rep.shallow_queries;
      // incremental means stay exact when every repeat gives the same value
      for (const auto& [qid, v] : rep.per_query) {
        double& acc = agg.per_query[qid];
        acc += (v - acc) / static_cast<double>(r + 1);
      }
    }
  }
  const double nr = static_cast<double>(repeats);
  for (auto& agg : out.reports) {
    double mean = 0.0;
    for (std::size_t r = 0; r < agg.per_repeat.size(); ++r)
      mean += (agg.per_repeat[r] - mean) / static_cast<double>(r + 1);
    agg.mean = mean;
    double ss = 0.0;
    for (double v : agg.per_repeat) ss += (v - mean) * (v - mean);
    agg.repeat_stddev = repeats > 1 ? std::sqrt(ss / (nr - 1.0)) : 0.0;
  }
  return out;
}

// Clean-query evaluation over several metrics with one ranking pass.
inline std::vector<MetricReport> clean_eval(const DualEncoder& model, const TextMap& queries,
                                            const TextMap& corpus, const Qrels& qrels,
                                            const std::vector<MetricSpec>& metrics) {
  const auto run = rank_corpus(model, queries, corpus, required_depth(metrics, corpus.size()));
  std::vector<MetricReport> out;
  for (const auto& m : metrics) out.push_back(compute_metric(m, run, qrels));
  return out;
}

}  // namespace typodr
