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

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "typodr/config.hpp"
#include "typodr/data.hpp"
#include "typodr/eval.hpp"
#include "typodr/stats.hpp"
#include "typodr/trainer.hpp"

namespace typodr {

// One trained (method, seed) cell of a comparison.
struct CellResult {
  Method method = Method::DR;
  std::uint64_t seed = 0;
  DualEncoder model;
  std::vector<TrainLogEntry> log;
  std::vector<MetricReport> clean;  // one per metric
  std::vector<MetricReport> typo;
};

struct CompareOptions {
  RunConfig base;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
};

struct CompareResult {
  std::vector<MetricSpec> metrics;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<CellResult> cells;  // method-major, then seed

  const CellResult& cell(Method m, std::uint64_t seed) const {
    for (const auto& c : cells)
      if (c.method == m && c.seed == seed) return c;
    throw InvalidInput(std::string("no cell for ") + to_string(m));
  }

  std::size_t metric_index(const std::string& name) const {
    for (std::size_t i = 0; i < metrics.size(); ++i)
      if (metrics[i].name() == name) return i;
    throw InvalidInput("metric " + name + " was not evaluated");
  }

  // Mean over seeds of a method's headline metric in one setting.
  double seed_mean(Method m, bool typo, const std::string& metric) const {
    const std::size_t mi = metric_index(metric);
    double s = 0.0;
    for (auto seed : seeds) s += (typo ? cell(m, seed).typo : cell(m, seed).clean)[mi].mean;
    return s / static_cast<double>(seeds.size());
  }

  // Per-query values averaged over seeds.
  std::vector<double> per_query(Method m, bool typo, const std::string& metric) const {
    const std::size_t mi = metric_index(metric);
    std::map<std::string, double, IdLess> acc;
    for (auto seed : seeds)
      for (const auto& [qid, v] : (typo ? cell(m, seed).typo : cell(m, seed).clean)[mi].per_query)
        acc[qid] += v;
    std::vector<double> out;
    for (const auto& [qid, v] : acc) out.push_back(v / static_cast<double>(seeds.size()));
    return out;
  }
};

// Trains and evaluates one cell. Typoed evaluation queries depend only on
// eval.seed, so every method sees the same corruptions.
inline CellResult run_cell(const Benchmark& bench, const RunConfig& base, Method method,
                           std::uint64_t seed, const std::vector<MetricSpec>& metrics) {
  RunConfig cfg = base;
  cfg.method.method = method;
  cfg.train.seed = seed;
  cfg.validate();
  CellResult cell;
  cell.method = method;
  cell.seed = seed;
  auto trained = train(bench.train, cfg.method, cfg.train, cfg.encoder, cfg.training_policy());
  cell.model = std::move(trained.model);
  cell.log = std::move(trained.log);
  cell.clean = clean_eval(cell.model, bench.eval.queries, bench.eval.collection, bench.eval.qrels,
                          metrics);
  AugmentationPolicy typo = cfg.augment;
  typo.k = 1;
  typo.seed = cfg.eval.seed;
  cell.typo = repeated_typo_eval(cell.model, bench.eval.queries, bench.eval.collection,
                                 bench.eval.qrels, cfg.eval.typo_repeats, typo, metrics)
                  .reports;
  return cell;
}

inline CompareResult run_compare(const Benchmark& bench, const CompareOptions& opt) {
  if (opt.methods.empty() || opt.seeds.empty())
    throw InvalidInput("compare: need at least one method and one seed");
  CompareResult res;
  res.metrics = parse_metric_list(opt.base.eval.metrics);
  res.methods = opt.methods;
  res.seeds = opt.seeds;
  const std::size_t n = opt.methods.size() * opt.seeds.size();
  res.cells.resize(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        res.cells[i] = run_cell(bench, opt.base, opt.methods[i / opt.seeds.size()],
                                opt.seeds[i % opt.seeds.size()], res.metrics);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return res;
}

// method, setting, metric, mean over seeds, sample stddev over seeds, then the
// per-seed values.
inline std::string format_compare_report(const CompareResult& r) {
  std::ostringstream o;
  o << "method\tsetting\tmetric\tmean\tstddev";
  for (auto s : r.seeds) o << "\tseed_" << s;
  o << '\n';
  for (auto m : r.methods)
    for (int typo = 0; typo < 2; ++typo)
      for (std::size_t mi = 0; mi < r.metrics.size(); ++mi) {
        std::vector<double> vals;
        for (auto s : r.seeds) {
          const auto& c = r.cell(m, s);
          vals.push_back((typo ? c.typo : c.clean)[mi].mean);
        }
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        const double sd = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0;
        o << to_string(m) << '\t' << (typo ? "typo" : "clean") << '\t' << r.metrics[mi].name()
          << '\t' << format_double(mean) << '\t' << format_double(sd);
        for (double v : vals) o << '\t' << format_double(v);
        o << '\n';
      }
  return o.str();
}

struct PairedComparison {
  Method multi;
  Method single;
  bool typo;
  std::string metric;
  TTestResult test;
};

// Paired t-tests of each multi-positive method against its single-positive
// counterpart, over per-query values averaged across seeds. Bonferroni counts
// the pairs tested per (setting, metric).
inline std::vector<PairedComparison> paired_comparisons(const CompareResult& r) {
  std::vector<std::pair<Method, Method>> pairs;
  for (auto m : r.methods)
    if (auto s = single_positive_counterpart(m))
      if (std::find(r.methods.begin(), r.methods.end(), *s) != r.methods.end())
        pairs.emplace_back(m, *s);
  std::vector<PairedComparison> out;
  for (int typo = 0; typo < 2; ++typo)
    for (const auto& spec : r.metrics)
      for (const auto& [multi, single] : pairs) {
        const auto a = r.per_query(multi, typo, spec.name());
        const auto b = r.per_query(single, typo, spec.name());
        if (a.size() < 2 || a.size() != b.size()) continue;
        out.push_back({multi, single, typo != 0, spec.name(), paired_t_test(a, b, pairs.size())});
      }
  return out;
}

inline std::string format_ttests(const std::vector<PairedComparison>& tests) {
  std::ostringstream o;
  o << "multi\tsingle\tsetting\tmetric\tmean_diff\tt\tp\tsignificant\tdegenerate\n";
  for (const auto& c : tests)
    o << to_string(c.multi) << '\t' << to_string(c.single) << '\t' << (c.typo ? "typo" : "clean")
      << '\t' << c.metric << '\t' << format_double(c.test.mean_difference) << '\t'
      << format_double(c.test.t) << '\t' << format_double(c.test.p) << '\t'
      << (c.test.significant ? 1 : 0) << '\t' << (c.test.degenerate ? 1 : 0) << '\n';
  return o.str();
}

}  // namespace typodr
