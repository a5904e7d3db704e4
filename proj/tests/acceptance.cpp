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

// Acceptance harness: prints one PASS/FAIL line per criterion and mirrors
// them into --out. Exits non-zero only when the harness itself breaks.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "typodr/cli.hpp"

using namespace typodr;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      else detail.str("");
      pass = false;
      detail << what;
    }
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream o;
  o.precision(digits);
  o << std::fixed << x;
  return o.str();
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

std::vector<double> random_scores(SplitMix64& rng, std::size_t n, double scale = 3.0) {
  std::vector<double> s(n);
  for (auto& x : s) x = scale * rng.normal();
  return s;
}

void loss_identities(Verdict& v) {
  SplitMix64 rng(101);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const double pos = 3.0 * rng.normal();
    const auto neg = random_scores(rng, 1 + rng.uniform_index(64));
    const auto a = ce_loss(pos, neg);
    const auto b = mce_loss(std::span<const double>(&pos, 1), neg);
    const bool same = std::memcmp(&a.loss, &b.loss, sizeof(double)) == 0 && a.pos_grad == b.pos_grad &&
                      a.neg_grad == b.neg_grad;
    mismatches += !same;
  }
  double worst = 0.0;
  for (std::size_t m = 1; m <= 64; ++m) {
    const double c = rng.normal();
    const std::vector<double> neg(m, c);
    worst = std::max(worst, std::fabs(ce_loss(c, neg).loss - std::log(1.0 + static_cast<double>(m))));
  }
  v.detail << "ce/mce bitwise mismatches " << mismatches << "/1000, max |ce - ln(1+M)| " << sci(worst);
  v.require(mismatches == 0, std::to_string(mismatches) + " ce/mce mismatches");
  v.require(worst < 1e-12, "uniform ce deviates by " + sci(worst));
}

void gradient_correctness(Verdict& v) {
  double worst = 0.0;
  std::ostringstream per;
  for (Method m : kAllMethods) {
    const auto r = gradcheck_method(m, 1, 20, true);
    per << (m == Method::DR ? "" : ", ") << to_string(m) << " " << sci(r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
    v.require(r.max_rel_error < 1e-4, std::string(to_string(m)) + " rel error " + sci(r.max_rel_error));
  }
  v.detail << "max rel error " << sci(worst) << " (" << per.str() << ")";
}

void shift_and_zero_sum(Verdict& v) {
  SplitMix64 rng(103);
  double worst_shift = 0.0, worst_sum = 0.0;
  for (int t = 0; t < 300; ++t) {
    const auto pos = random_scores(rng, 1 + rng.uniform_index(6));
    const auto neg = random_scores(rng, 1 + rng.uniform_index(30));
    const auto base_ce = ce_loss(pos[0], neg);
    const auto base_mce = mce_loss(pos, neg);
    for (double c : {-10.0, 1.0, 100.0}) {
      auto p2 = pos, n2 = neg;
      for (auto& x : p2) x += c;
      for (auto& x : n2) x += c;
      worst_shift = std::max(worst_shift, std::fabs(ce_loss(p2[0], n2).loss - base_ce.loss));
      worst_shift = std::max(worst_shift, std::fabs(mce_loss(p2, n2).loss - base_mce.loss));
    }
    for (const auto* r : {&base_ce, &base_mce}) {
      double s = 0.0;
      for (double g : r->pos_grad) s += g;
      for (double g : r->neg_grad) s += g;
      worst_sum = std::max(worst_sum, std::fabs(s));
    }
  }
  v.detail << "max |loss shift| " << sci(worst_shift) << ", max |grad sum| " << sci(worst_sum);
  v.require(worst_shift < 1e-9, "shift changes loss by " + sci(worst_shift));
  v.require(worst_sum < 1e-12, "gradient sum " + sci(worst_sum));
}

void kl_properties(Verdict& v) {
  SplitMix64 rng(104);
  std::size_t nonzero_identical = 0, negative = 0;
  double min_kl = 1e300;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.uniform_index(30), k = 1 + rng.uniform_index(8);
    const auto clean = softmax_distribution(random_scores(rng, n));
    std::vector<ScoreDistribution> same(k, clean), other;
    for (std::size_t i = 0; i < k; ++i) other.push_back(softmax_distribution(random_scores(rng, n)));
    nonzero_identical += kl_self_teaching(same, clean).loss != 0.0;
    const double kl = kl_self_teaching(other, clean).loss;
    negative += kl < 0.0;
    min_kl = std::min(min_kl, kl);
  }
  v.detail << "identical-distribution nonzero " << nonzero_identical << "/1000, negative " << negative
           << "/1000, min " << sci(min_kl);
  v.require(nonzero_identical == 0, "KL of identical distributions is not exactly 0");
  v.require(negative == 0, "negative KL values");
}

void metric_oracles(Verdict& v) {
  auto ranked = [](const std::vector<std::string>& ids) {
    std::vector<ScoredPassage> out;
    double s = static_cast<double>(ids.size());
    for (const auto& id : ids) out.push_back({id, s--});
    return out;
  };
  using Judged = std::map<std::string, int, IdLess>;
  const double ex1 = metric_value(parse_metric("mrr@10"), ranked({"a", "b", "c"}), Judged{{"c", 1}});
  const double ex2 = metric_value(parse_metric("recall@2"), ranked({"a", "b", "c"}), Judged{{"a", 1}, {"c", 1}});
  const double ex3 = metric_value(parse_metric("ndcg@10"), ranked({"a", "b", "c"}), Judged{{"b", 1}});
  const double ex4 = metric_value(parse_metric("map"), ranked({"a", "b", "c"}), Judged{{"a", 1}, {"c", 1}});
  v.require(std::fabs(ex1 - 1.0 / 3.0) < 1e-12, "MRR example " + fmt(ex1, 15));
  v.require(std::fabs(ex2 - 0.5) < 1e-12, "Recall example " + fmt(ex2, 15));
  v.require(std::fabs(ex3 - 1.0 / std::log2(3.0)) < 1e-12, "nDCG example " + fmt(ex3, 15));
  v.require(std::fabs(ex4 - 5.0 / 6.0) < 1e-12, "MAP example " + fmt(ex4, 15));

  SplitMix64 rng(105);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t pool = 5 + rng.uniform_index(60);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < pool; ++i) ids.push_back("d" + std::to_string(i));
    seeded_shuffle(ids, rng);
    ids.resize(1 + rng.uniform_index(pool));
    std::map<std::string, int> grades;
    const std::size_t nrel = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < nrel; ++i)
      grades["d" + std::to_string(rng.uniform_index(pool))] = 1 + static_cast<int>(rng.uniform_index(3));
    const Judged g(grades.begin(), grades.end());
    const auto run = ranked(ids);
    for (std::size_t k : {1, 5, 10, 100}) {
      const std::string c = "@" + std::to_string(k);
      worst = std::max(worst, std::fabs(metric_value(parse_metric("mrr" + c), run, g) - oracle::mrr(ids, grades, k)));
      worst = std::max(worst, std::fabs(metric_value(parse_metric("recall" + c), run, g) - oracle::recall(ids, grades, k)));
      worst = std::max(worst, std::fabs(metric_value(parse_metric("ndcg" + c), run, g) - oracle::ndcg(ids, grades, k)));
    }
    worst = std::max(worst, std::fabs(metric_value(parse_metric("map"), run, g) - oracle::average_precision(ids, grades)));
  }
  if (v.pass) v.detail << "examples exact, max |impl - reference| " << sci(worst) << " over 50 runs";
  v.require(worst < 1e-12, "reference mismatch " + sci(worst));
}

void typo_generator(Verdict& v) {
  AugmentationPolicy p;
  p.k = 10000;
  p.seed = 106;
  const std::string query = "typo robust dense passage retrieval";
  std::vector<TypoDraw> draws;
  const auto a = generate_variants(query, p, &draws);
  std::size_t not_one = 0;
  for (const auto& s : a.variants) not_one += oracle::damerau_levenshtein(s, query) != 1;
  std::map<TypoKind, double> freq;
  for (const auto& d : draws) freq[d.kind] += 1.0 / static_cast<double>(draws.size());
  double worst_dev = 0.0;
  for (auto k : kAllTypoKinds) worst_dev = std::max(worst_dev, std::fabs(freq[k] - 0.2));
  const auto b = generate_variants(query, p);
  v.detail << "distance != 1: " << not_one << "/10000, max |freq - 0.2| " << fmt(worst_dev)
           << ", regeneration " << (a.variants == b.variants ? "identical" : "differs");
  v.require(a.variants.size() == 10000, "wrong variant count");
  v.require(not_one == 0, std::to_string(not_one) + " variants not at distance 1");
  v.require(worst_dev <= 0.02, "kind frequency off by " + fmt(worst_dev));
  v.require(a.variants == b.variants, "regeneration differs");
}

const char* kHeadline = "mrr@10";

CompareResult compare_methods(const Benchmark& bench, std::vector<Method> methods, std::size_t k,
                              const std::vector<std::uint64_t>& seeds) {
  CompareOptions opt;
  opt.base.method.k = k;
  opt.methods = std::move(methods);
  opt.seeds = seeds;
  return run_compare(bench, opt);
}

void table_direction(Verdict& v, const CompareResult& r, double seconds) {
  auto typo = [&](Method m) { return r.seed_mean(m, true, kHeadline); };
  std::ostringstream means;
  for (Method m : kAllMethods) means << (m == Method::DR ? "" : " ") << to_string(m) << "=" << fmt(typo(m));
  const std::pair<Method, Method> pairs[] = {{Method::DR_CL_M, Method::DR_CL},
                                             {Method::DR_DL_M, Method::DR_DL},
                                             {Method::DR_ST_DL_M, Method::DR_ST_DL}};
  v.detail << "typo MRR@10 " << means.str() << "; " << fmt(seconds / 60.0, 1) << " min";
  for (const auto& [multi, single] : pairs) {
    const double d = typo(multi) - typo(single);
    v.require(d >= 0.0, std::string(to_string(multi)) + " - " + to_string(single) + " = " + fmt(d, 5));
  }
  for (Method m : kAllMethods) {
    if (m == Method::DR) continue;
    const double d = typo(m) - typo(Method::DR);
    v.require(d > 0.0, std::string(to_string(m)) + " does not beat dr (" + fmt(d, 5) + ")");
  }
  v.require(seconds < 30 * 60, "runtime " + fmt(seconds / 60.0, 1) + " min");
  if (!v.pass) v.detail << " | typo MRR@10 " << means.str();
}

void augmentation_sweep(Verdict& v, const Benchmark& bench, const CompareResult* k8,
                        const std::vector<std::uint64_t>& seeds, std::ostream& log) {
  Stopwatch clock;
  std::ostringstream per_k;
  std::vector<std::string> failures;
  for (std::size_t k : {1, 2, 4, 8}) {
    CompareResult owned;
    const CompareResult* r = k8;
    if (k != 8 || !k8) {
      owned = compare_methods(bench, {Method::DR_ST_DL, Method::DR_ST_DL_M}, k, seeds);
      r = &owned;
    }
    const double single = r->seed_mean(Method::DR_ST_DL, true, kHeadline);
    const double multi = r->seed_mean(Method::DR_ST_DL_M, true, kHeadline);
    per_k << (k == 1 ? "" : ", ") << "K=" << k << " " << fmt(single) << "->" << fmt(multi);
    log << "  K=" << k << " dr_st_dl " << fmt(single) << " dr_st_dl_m " << fmt(multi) << '\n';
    if (multi < single) failures.push_back("K=" + std::to_string(k) + " multi < single");
  }
  const double seconds = clock.seconds();

  // K=1 loss-level coincidence of the two objectives.
  SplitMix64 rng(108);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t nq = 2 + rng.uniform_index(4), np = nq * (1 + rng.uniform_index(3));
    BatchScores b;
    b.qp = Matrix(nq, np);
    for (auto& x : b.qp.data) x = 2.0 * rng.normal();
    for (std::size_t i = 0; i < nq; ++i) {
      b.positive_index.push_back(i * (np / nq));
      Matrix t1(1, np);
      for (auto& x : t1.data) x = 2.0 * rng.normal();
      b.tqp.push_back(t1);
    }
    b.qq = Matrix(nq, nq);
    for (auto& x : b.qq.data) x = 2.0 * rng.normal();
    b.qt = Matrix(nq, 1);
    for (auto& x : b.qt.data) x = 2.0 * rng.normal();
    MethodConfig single, multi;
    single.method = Method::DR_ST_DL;
    multi.method = Method::DR_ST_DL_M;
    single.k = multi.k = 1;
    worst = std::max(worst, std::fabs(method_loss(single, b).loss - method_loss(multi, b).loss));
  }
  v.detail << "typo MRR@10 dr_st_dl->dr_st_dl_m " << per_k.str() << "; K=1 max |loss difference| "
           << sci(worst) << "; sweep " << fmt(seconds / 60.0, 1) << " min";
  for (const auto& f : failures) v.require(false, f);
  v.require(worst == 0.0, "K=1 losses differ by up to " + sci(worst));
  v.require(seconds < 45 * 60, "runtime " + fmt(seconds / 60.0, 1) + " min");
  if (!v.pass) v.detail << " | " << per_k.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(Verdict& v, const fs::path& work) {
  const auto bench_dir = work / "benchmark";
  save_benchmark(generate_synthetic(SynthConfig{}), bench_dir);
  std::vector<fs::path> outs;
  for (const char* name : {"compare_a", "compare_b"}) {
    const auto dir = work / name;
    fs::remove_all(dir);
    std::ostringstream out, err;
    const int code = run_cli({"compare", "--data-dir", bench_dir.string(), "--methods", "dr,dr_st_dl_m",
                              "--seeds", "0,1", "--out-dir", dir.string()},
                             out, err);
    if (code != 0) throw std::runtime_error("compare exited " + std::to_string(code) + ": " + err.str());
    outs.push_back(dir);
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(outs[0])) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), outs[0]);
    ++compared;
    if (slurp(e.path()) != slurp(outs[1] / rel)) differing.push_back(rel.string());
  }
  v.detail << compared << " files compared (report, t-tests, config, checkpoints, logs), " << differing.size()
           << " differ";
  for (const auto& d : differing) v.require(false, d + " differs");
  v.require(compared >= 7, "too few output files");
}

struct TTestCase {
  std::vector<double> a, b;
  double t, p;
};

const TTestCase kTTestCases[] = {
#include "oracles/ttest_reference.inc"
};

void ttest_reference(Verdict& v) {
  double dt = 0.0, dp = 0.0;
  for (const auto& c : kTTestCases) {
    const auto r = paired_t_test(c.a, c.b);
    dt = std::max(dt, std::fabs(r.t - c.t));
    dp = std::max(dp, std::fabs(r.p - c.p));
  }
  const std::vector<double> same = {0.1, 0.4, 0.9, 0.3};
  const auto id = paired_t_test(same, same);
  v.detail << std::size(kTTestCases) << " reference samples, max |dt| " << sci(dt) << ", max |dp| " << sci(dp)
           << ", identical lists p=" << id.p;
  v.require(dt < 1e-9, "t off by " + sci(dt));
  v.require(dp < 1e-9, "p off by " + sci(dp));
  v.require(id.p == 1.0 && id.t == 0.0 && !id.significant, "identical lists not p=1");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"typodr acceptance checks"};
  std::string work = (fs::temp_directory_path() / "typodr_acceptance").string();
  std::string out_path;
  std::vector<int> only;
  std::size_t seeds_n = 5;
  app.add_option("--work-dir", work, "Scratch directory")->capture_default_str();
  app.add_option("--out", out_path, "Also write the PASS/FAIL lines here");
  app.add_option("--only", only, "Run just these criteria")->delimiter(',');
  app.add_option("--seeds", seeds_n, "Seeds for the training comparisons")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < seeds_n; ++s) seeds.push_back(s);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  std::vector<std::string> lines;
  auto record = [&](int id, const std::string& title, const std::function<void(Verdict&)>& body) {
    if (!wanted(id)) return;
    Verdict v;
    Stopwatch clock;
    try {
      body(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail.str("");
      v.detail << "error: " << e.what();
    }
    std::ostringstream line;
    line << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << title << " [" << fmt(clock.seconds(), 1)
         << " s]  " << v.detail.str();
    std::cout << line.str() << std::endl;
    lines.push_back(line.str());
  };

  record(1, "loss identities", [](Verdict& v) {
    Stopwatch c;
    loss_identities(v);
    v.require(c.seconds() < 1.0, "runtime " + fmt(c.seconds(), 2) + " s");
  });
  record(2, "gradient correctness", [](Verdict& v) {
    Stopwatch c;
    gradient_correctness(v);
    v.require(c.seconds() < 120.0, "runtime " + fmt(c.seconds(), 1) + " s");
  });
  record(3, "shift invariance and zero-sum", [](Verdict& v) {
    Stopwatch c;
    shift_and_zero_sum(v);
    v.require(c.seconds() < 1.0, "runtime " + fmt(c.seconds(), 2) + " s");
  });
  record(4, "KL properties", [](Verdict& v) {
    Stopwatch c;
    kl_properties(v);
    v.require(c.seconds() < 1.0, "runtime " + fmt(c.seconds(), 2) + " s");
  });
  record(5, "metric oracle equivalence", metric_oracles);
  record(6, "typo generator", [](Verdict& v) {
    Stopwatch c;
    typo_generator(v);
    v.require(c.seconds() < 30.0, "runtime " + fmt(c.seconds(), 1) + " s");
  });

  std::optional<Benchmark> bench;
  auto benchmark = [&]() -> const Benchmark& {
    if (!bench) bench = generate_synthetic(SynthConfig{});
    return *bench;
  };
  std::optional<CompareResult> table;
  std::ofstream detail_log(fs::path(work) / "training_comparisons.txt");
  record(7, "multi-positive vs single-positive, typo MRR@10", [&](Verdict& v) {
    Stopwatch c;
    table = compare_methods(benchmark(), {std::begin(kAllMethods), std::end(kAllMethods)}, 8, seeds);
    const double s = c.seconds();
    detail_log << format_compare_report(*table) << '\n' << format_ttests(paired_comparisons(*table)) << '\n';
    table_direction(v, *table, s);
  });
  record(8, "augmentation size sweep", [&](Verdict& v) {
    augmentation_sweep(v, benchmark(), table ? &*table : nullptr, seeds, detail_log);
  });
  record(9, "determinism of compare", [&](Verdict& v) { determinism(v, work); });
  record(10, "paired t-test reference", ttest_reference);

  std::size_t passed = 0;
  for (const auto& l : lines) passed += l.find(": PASS") != std::string::npos;
  std::ostringstream summary;
  summary << passed << "/" << lines.size() << " criteria passed";
  std::cout << summary.str() << std::endl;
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    for (const auto& l : lines) f << l << '\n';
    f << summary.str() << '\n';
    if (!f) {
      std::cerr << "cannot write " << out_path << '\n';
      return 1;
    }
  }
  return 0;
}
