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

#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace typodr;

namespace {

std::vector<ScoredPassage> ranked_ids(const std::vector<std::string>& ids) {
  std::vector<ScoredPassage> out;
  double s = static_cast<double>(ids.size());
  for (const auto& id : ids) out.push_back({id, s--});
  return out;
}

std::map<std::string, int, IdLess> judged(std::initializer_list<std::pair<const std::string, int>> g) {
  return {g.begin(), g.end()};
}

double value(const std::string& metric, const std::vector<std::string>& ids,
             std::initializer_list<std::pair<const std::string, int>> g) {
  return metric_value(parse_metric(metric), ranked_ids(ids), judged(g));
}

TextMap small_corpus() {
  return {{"p1", "sparse lexical match"},
          {"p2", "dense vector retrieval"},
          {"p3", "typo robust encoder"},
          {"p4", "keyboard adjacent letters"},
          {"p5", "passage ranking metrics"}};
}

}  // namespace

TEST(Metrics, DocumentedExamples) {
  EXPECT_DOUBLE_EQ(value("mrr@10", {"a", "b", "c", "d"}, {{"c", 1}}), 1.0 / 3);
  EXPECT_DOUBLE_EQ(value("recall@2", {"a", "b", "c"}, {{"a", 1}, {"c", 1}}), 0.5);
  EXPECT_DOUBLE_EQ(value("ndcg@10", {"a", "b", "c"}, {{"b", 1}}), 1.0 / std::log2(3.0));
  EXPECT_NEAR(value("map", {"a", "b", "c"}, {{"a", 1}, {"c", 1}}), 0.833333333333333333, 1e-15);
  EXPECT_EQ(value("mrr@2", {"a", "b", "c"}, {{"c", 1}}), 0.0);
  EXPECT_EQ(value("mrr", {"a", "b", "c"}, {{"c", 1}}), 1.0 / 3);
}

TEST(Metrics, Parsing) {
  EXPECT_EQ(parse_metric("MRR@10").name(), "mrr@10");
  EXPECT_EQ(parse_metric("r@1000").name(), "recall@1000");
  EXPECT_EQ(parse_metric("map").name(), "map");
  EXPECT_FALSE(parse_metric("ndcg").cutoff.has_value());
  for (const char* bad : {"prec@10", "mrr@", "mrr@0", "mrr@x", ""}) EXPECT_THROW(parse_metric(bad), InvalidInput) << bad;
  const auto list = parse_metric_list("mrr@10,recall@1000,ndcg@10,map");
  ASSERT_EQ(list.size(), 4u);
  EXPECT_EQ(list[2].name(), "ndcg@10");
  EXPECT_THROW(parse_metric_list(","), InvalidInput);
}

TEST(Metrics, MatchReferenceOnRandomRuns) {
  SplitMix64 rng(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t pool = 5 + rng.uniform_index(40);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < pool; ++i) ids.push_back("d" + std::to_string(i));
    seeded_shuffle(ids, rng);
    const std::size_t depth = 1 + rng.uniform_index(pool);
    std::vector<std::string> ranked(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(depth));
    std::map<std::string, int> grades;
    const std::size_t nrel = 1 + rng.uniform_index(5);
    for (std::size_t i = 0; i < nrel; ++i) grades["d" + std::to_string(rng.uniform_index(pool))] = 1 + static_cast<int>(rng.uniform_index(3));
    const std::map<std::string, int, IdLess> g(grades.begin(), grades.end());
    const auto run = ranked_ids(ranked);
    for (std::size_t k : {1, 3, 10, 1000}) {
      const std::string c = "@" + std::to_string(k);
      EXPECT_NEAR(metric_value(parse_metric("mrr" + c), run, g), oracle::mrr(ranked, grades, k), 1e-12);
      EXPECT_NEAR(metric_value(parse_metric("recall" + c), run, g), oracle::recall(ranked, grades, k), 1e-12);
      EXPECT_NEAR(metric_value(parse_metric("ndcg" + c), run, g), oracle::ndcg(ranked, grades, k), 1e-12);
    }
    EXPECT_NEAR(metric_value(parse_metric("map"), run, g), oracle::average_precision(ranked, grades), 1e-12);
  }
}

TEST(Metrics, BoundsAndIdealRanking) {
  SplitMix64 rng(32);
  for (int t = 0; t < 100; ++t) {
    std::map<std::string, int, IdLess> g;
    std::vector<std::pair<int, std::string>> by_grade;
    for (int i = 0; i < 6; ++i) {
      const int grade = static_cast<int>(rng.uniform_index(4));
      if (grade > 0) {
        g["r" + std::to_string(i)] = grade;
        by_grade.emplace_back(grade, "r" + std::to_string(i));
      }
    }
    if (g.empty()) continue;
    std::sort(by_grade.rbegin(), by_grade.rend());
    std::vector<std::string> ideal;
    for (const auto& [grade, id] : by_grade) ideal.push_back(id);
    ideal.push_back("x");
    EXPECT_DOUBLE_EQ(metric_value(parse_metric("ndcg@3"), ranked_ids(ideal), g), 1.0);
    EXPECT_DOUBLE_EQ(metric_value(parse_metric("ndcg"), ranked_ids(ideal), g), 1.0);
    std::vector<std::string> shuffled = ideal;
    seeded_shuffle(shuffled, rng);
    for (const char* m : {"mrr@10", "recall@3", "ndcg@10", "map"}) {
      const double v = metric_value(parse_metric(m), ranked_ids(shuffled), g);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const double mrr = metric_value(parse_metric("mrr@10"), ranked_ids(shuffled), g);
    EXPECT_EQ(mrr == 1.0, g.count(shuffled[0]) > 0);
  }
}

TEST(Metrics, DeeperRelevantNeverLowersRecallOrMap) {
  SplitMix64 rng(33);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::string> ranked;
    for (int i = 0; i < 8; ++i) ranked.push_back("n" + std::to_string(i));
    std::map<std::string, int, IdLess> g = {{"rel0", 1}, {"rel1", 1}, {"rel2", 1}};
    ranked[rng.uniform_index(8)] = "rel0";
    const double recall_before = metric_value(parse_metric("recall@20"), ranked_ids(ranked), g);
    const double map_before = metric_value(parse_metric("map"), ranked_ids(ranked), g);
    ranked.push_back("rel1");
    EXPECT_GE(metric_value(parse_metric("recall@20"), ranked_ids(ranked), g), recall_before);
    EXPECT_GE(metric_value(parse_metric("map"), ranked_ids(ranked), g), map_before);
  }
}

TEST(ComputeMetric, SkipsUnjudgedAndCountsShallow) {
  typodr::Run run;
  run["q1"] = ranked_ids({"a", "b"});
  run["q2"] = ranked_ids({"c", "d"});
  run["q3"] = ranked_ids({"e"});
  Qrels qrels;
  qrels["q1"]["b"] = 1;
  qrels["q3"]["e"] = 2;
  const auto rep = compute_metric(parse_metric("mrr@10"), run, qrels);
  EXPECT_EQ(rep.skipped_queries, 1u);
  EXPECT_EQ(rep.shallow_queries, 2u);
  EXPECT_EQ(rep.per_query.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.mean, 0.75);
  EXPECT_EQ(rep.metric, "mrr@10");
}

TEST(RankCorpus, SinglePassage) {
  EncoderConfig ec;
  ec.embed_dim = 8;
  const auto model = DualEncoder::random(ec, 1);
  const TextMap corpus = {{"only", "a lone passage"}};
  const TextMap queries = {{"q1", "anything"}, {"q2", "else"}};
  const auto run = rank_corpus(model, queries, corpus, 10);
  for (const auto& [qid, ranked] : run) {
    ASSERT_EQ(ranked.size(), 1u);
    EXPECT_EQ(ranked[0].pid, "only");
  }
}

TEST(RankCorpus, ZeroParamsRankByPassageId) {
  EncoderConfig ec;
  const auto model = DualEncoder::zeros(ec);
  const TextMap corpus = {{"10", "x"}, {"9", "y"}, {"b", "z"}, {"a", "w"}, {"100", "v"}};
  const auto run = rank_corpus(model, {{"q", "query"}}, corpus, 5);
  std::vector<std::string> ids;
  for (const auto& sp : run.at("q")) {
    ids.push_back(sp.pid);
    EXPECT_EQ(sp.score, 0.0);
  }
  std::vector<std::string> expected = {"10", "9", "b", "a", "100"};
  std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) { return id_less(a, b); });
  EXPECT_EQ(ids, expected);
}

TEST(RankCorpus, MatchesBruteForceSort) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EncoderConfig ec;
    ec.embed_dim = 6;
    ec.num_buckets = 64;
    const auto model = DualEncoder::random(ec, seed);
    const auto corpus = small_corpus();
    const TextMap queries = {{"q1", "typo robust"}, {"q2", "dense lexical"}};
    const auto run = rank_corpus(model, queries, corpus, 5);
    for (const auto& [qid, text] : queries) {
      const auto q = oracle::encode_dense(model.towers[0], tokenize(text, ec).bucket_ids);
      std::vector<std::pair<double, std::string>> ref;
      for (const auto& [pid, ptext] : corpus) {
        const auto p = oracle::encode_dense(model.towers[0], tokenize(ptext, ec).bucket_ids);
        double s = 0;
        for (std::size_t d = 0; d < p.size(); ++d) s += q[d] * p[d];
        ref.emplace_back(-s, pid);
      }
      std::sort(ref.begin(), ref.end());
      const auto& got = run.at(qid);
      ASSERT_EQ(got.size(), ref.size());
      for (std::size_t r = 0; r < ref.size(); ++r) {
        EXPECT_EQ(got[r].pid, ref[r].second);
        EXPECT_NEAR(got[r].score, -ref[r].first, 1e-9);
      }
    }
  }
}

TEST(RankCorpus, TopKTruncatesAndIsDeterministic) {
  EncoderConfig ec;
  const auto model = DualEncoder::random(ec, 3);
  const TextMap queries = {{"q", "robust ranking"}};
  const auto a = rank_corpus(model, queries, small_corpus(), 2);
  const auto b = rank_corpus(model, queries, small_corpus(), 2);
  ASSERT_EQ(a.at("q").size(), 2u);
  EXPECT_EQ(a, b);
  EXPECT_GE(a.at("q")[0].score, a.at("q")[1].score);
  EXPECT_THROW(rank_corpus(model, queries, small_corpus(), 0), InvalidInput);
  EXPECT_THROW(rank_corpus(model, queries, {}, 3), InvalidInput);
}

TEST(RepeatedTypoEval, IdentityPolicyEqualsClean) {
  const auto bench = generate_synthetic(SynthConfig{});
  EncoderConfig ec;
  const auto model = DualEncoder::random(ec, 0);
  const auto metrics = parse_metric_list("mrr@10,recall@100");
  const auto clean = clean_eval(model, bench.eval.queries, bench.eval.collection, bench.eval.qrels, metrics);
  AugmentationPolicy identity;
  identity.k = 0;
  const auto rep = repeated_typo_eval(model, bench.eval.queries, bench.eval.collection, bench.eval.qrels,
                                      3, identity, metrics);
  for (std::size_t m = 0; m < metrics.size(); ++m) {
    EXPECT_EQ(rep.reports[m].mean, clean[m].mean);
    EXPECT_EQ(rep.reports[m].repeat_stddev, 0.0);
    EXPECT_EQ(rep.reports[m].per_query, clean[m].per_query);
  }
}

TEST(RepeatedTypoEval, SingleRepeatEqualsOneCorruptedRun) {
  const auto bench = generate_synthetic(SynthConfig{});
  const auto model = DualEncoder::random(EncoderConfig{}, 1);
  const auto metrics = parse_metric_list("mrr@10");
  AugmentationPolicy p;
  p.seed = 17;
  const auto rep = repeated_typo_eval(model, bench.eval.queries, bench.eval.collection, bench.eval.qrels,
                                      1, p, metrics);
  const auto corrupted = corrupt_queries(bench.eval.queries, p, 0);
  const auto run = rank_corpus(model, corrupted, bench.eval.collection, 10);
  const auto single = compute_metric(metrics[0], run, bench.eval.qrels);
  EXPECT_EQ(rep.reports[0].mean, single.mean);
  EXPECT_EQ(rep.reports[0].per_query, single.per_query);
  EXPECT_EQ(rep.reports[0].per_repeat.size(), 1u);
  std::size_t changed = 0;
  for (const auto& [qid, text] : corrupted) {
    const std::string& orig = bench.eval.queries.at(qid);
    changed += text != orig;
    EXPECT_LE(oracle::damerau_levenshtein(text, orig), 1u);
  }
  EXPECT_EQ(changed, corrupted.size());
}

TEST(RepeatedTypoEval, MeanWithinRepeatRange) {
  const auto bench = generate_synthetic(SynthConfig{});
  const auto model = DualEncoder::random(EncoderConfig{}, 2);
  const auto rep = repeated_typo_eval(model, bench.eval.queries, bench.eval.collection, bench.eval.qrels,
                                      10, AugmentationPolicy{}, parse_metric_list("mrr@10,map"));
  for (const auto& r : rep.reports) {
    ASSERT_EQ(r.per_repeat.size(), 10u);
    const auto [lo, hi] = std::minmax_element(r.per_repeat.begin(), r.per_repeat.end());
    EXPECT_GE(r.mean, *lo);
    EXPECT_LE(r.mean, *hi);
    EXPECT_GT(r.repeat_stddev, 0.0);
    double s = 0;
    for (const auto& [qid, v] : r.per_query) s += v;
    EXPECT_NEAR(s / static_cast<double>(r.per_query.size()), r.mean, 1e-12);
  }
  EXPECT_THROW(repeated_typo_eval(model, bench.eval.queries, bench.eval.collection, bench.eval.qrels, 0,
                                  AugmentationPolicy{}, parse_metric_list("map")),
               InvalidInput);
}

struct TTestCase {
  std::vector<double> a, b;
  double t, p;
};

const TTestCase kTTestCases[] = {
#include "oracles/ttest_reference.inc"
};

TEST(PairedTTest, MatchesHighPrecisionReference) {
  for (const auto& c : kTTestCases) {
    const auto r = paired_t_test(c.a, c.b);
    EXPECT_NEAR(r.t, c.t, 1e-9 * std::max(1.0, std::fabs(c.t)));
    EXPECT_NEAR(r.p, c.p, 1e-9);
    EXPECT_EQ(r.significant, c.p < 0.05);
    EXPECT_FALSE(r.degenerate);
  }
}

TEST(PairedTTest, Examples) {
  const std::vector<double> a = {0.5, 0.6, 0.7}, b = {0.4, 0.4, 0.5};
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, 5.0, 1e-12);
  EXPECT_TRUE(r.significant);
  EXPECT_FALSE(paired_t_test(a, b, 2).significant);
  const auto same = paired_t_test(a, a);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p, 1.0);
  EXPECT_FALSE(same.significant);
  const std::vector<double> c = {2, 3, 4, 5}, d = {1, 2, 3, 4};
  const auto deg = paired_t_test(c, d);
  EXPECT_TRUE(deg.degenerate);
  EXPECT_TRUE(std::isinf(deg.t));
  EXPECT_TRUE(deg.significant);
  EXPECT_THROW(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), InvalidInput);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1.0, 2.0}), InvalidInput);
}

TEST(PairedTTest, SwappingNegatesTKeepsP) {
  for (const auto& c : kTTestCases) {
    const auto ab = paired_t_test(c.a, c.b), ba = paired_t_test(c.b, c.a);
    EXPECT_EQ(ab.t, -ba.t);
    EXPECT_EQ(ab.p, ba.p);
  }
}

TEST(IncompleteBeta, KnownValues) {
  EXPECT_NEAR(regularized_incomplete_beta(1, 1, 0.3), 0.3, 1e-15);
  EXPECT_NEAR(regularized_incomplete_beta(2, 3, 0.4), 0.5248, 1e-14);
  EXPECT_NEAR(student_t_two_tailed_p(2.0, 1.0), 1.0 - 2.0 * std::atan(2.0) / M_PI, 1e-14);
}

TEST(RunFiles, RoundTrip) {
  typodr::Run run;
  run["q1"] = {{"p2", 1.5}, {"p1", -0.25}};
  run["q2"] = {{"p3", 0.1}};
  std::stringstream ss;
  write_run(ss, run);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "q1 Q0 p2 1 " + format_double(1.5) + " typodr");
  EXPECT_EQ(parse_run(ss, "mem"), run);
  Qrels q;
  q["3"]["7"] = 1;
  std::stringstream qs;
  write_qrels(qs, q);
  EXPECT_EQ(qs.str(), "3 0 7 1\n");
  EXPECT_EQ(parse_qrels(qs), q);
}
