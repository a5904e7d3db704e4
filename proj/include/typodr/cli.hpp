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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "typodr/checkpoint.hpp"
#include "typodr/config.hpp"
#include "typodr/data.hpp"
#include "typodr/eval.hpp"
#include "typodr/experiment.hpp"
#include "typodr/gradcheck.hpp"
#include "typodr/trainer.hpp"
#include "typodr/typo_gen.hpp"

namespace typodr {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("failed writing " + path.string());
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) cfg = load_run_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects section.key=value, got " + kv);
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1), "--set");
  }
  cfg.validate();
  return cfg;
}

inline std::string format_log(const std::vector<TrainLogEntry>& log) {
  std::ostringstream o;
  o << "step\tloss\tlr\n";
  for (const auto& e : log) o << e.step << '\t' << format_double(e.loss) << '\t' << format_double(e.lr) << '\n';
  return o.str();
}

}  // namespace detail

// Entry point of the `typodr` binary. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 numerical failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"typodr: typo-robust dual-encoder training and evaluation", "typodr"};
  app.require_subcommand(1);
  app.fallthrough(false);

  // augment
  std::string aug_queries, aug_out;
  AugmentationPolicy aug_policy;
  auto* augment = app.add_subcommand("augment", "Write K typoed variants per query");
  augment->add_option("--queries", aug_queries, "Query TSV (qid<TAB>text)")->required();
  augment->add_option("--k", aug_policy.k, "Variants per query")->capture_default_str();
  augment->add_option("--seed", aug_policy.seed, "RNG seed")->capture_default_str();
  augment->add_option("--min-word-len", aug_policy.min_word_len, "Shortest word eligible for typos")
      ->capture_default_str();
  augment->add_option("--transforms", aug_policy.transforms_per_variant, "Edits per variant")
      ->capture_default_str();
  augment->add_option("--out", aug_out, "Output TSV (qid, variant_index, text)")->required();

  // synth
  SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark");
  synth->add_option("--out-dir", synth_out, "Output directory")->required();
  synth->add_option("--passages", synth_cfg.num_passages)->capture_default_str();
  synth->add_option("--train-queries", synth_cfg.num_train_queries)->capture_default_str();
  synth->add_option("--eval-queries", synth_cfg.num_eval_queries)->capture_default_str();
  synth->add_option("--vocab", synth_cfg.vocab_size)->capture_default_str();
  synth->add_option("--passage-len", synth_cfg.passage_len_words)->capture_default_str();
  synth->add_option("--query-len", synth_cfg.query_len_words)->capture_default_str();
  synth->add_option("--hard-negatives", synth_cfg.hard_negatives_per_query)->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();

  // train
  std::string train_config, train_data, train_out, train_log;
  std::vector<std::string> train_sets;
  auto* trainc = app.add_subcommand("train", "Train one method");
  trainc->add_option("--config", train_config, "Run config file (INI)");
  trainc->add_option("--data-dir", train_data, "Benchmark directory")->required();
  trainc->add_option("--out", train_out, "Checkpoint path")->required();
  trainc->add_option("--log", train_log, "Training log TSV (step, loss, lr)");
  trainc->add_option("--set", train_sets, "Override: section.key=value");

  // evaluate
  std::string ev_ckpt, ev_queries, ev_collection, ev_qrels, ev_report, ev_run;
  std::string ev_metrics = EvalSettings{}.metrics;
  std::size_t ev_repeats = 10;
  std::uint64_t ev_seed = 0;
  std::size_t ev_min_word_len = 3;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on clean and typoed queries");
  evaluate->add_option("--checkpoint", ev_ckpt)->required();
  evaluate->add_option("--queries", ev_queries)->required();
  evaluate->add_option("--collection", ev_collection)->required();
  evaluate->add_option("--qrels", ev_qrels)->required();
  evaluate->add_option("--metrics", ev_metrics)->capture_default_str();
  evaluate->add_option("--typo-repeats", ev_repeats, "0 skips the typo setting")->capture_default_str();
  evaluate->add_option("--seed", ev_seed)->capture_default_str();
  evaluate->add_option("--min-word-len", ev_min_word_len)->capture_default_str();
  evaluate->add_option("--report", ev_report, "Report TSV")->required();
  evaluate->add_option("--run", ev_run, "Also write the clean TREC run here");

  // gradcheck
  std::string gc_method = "all";
  std::uint64_t gc_seed = 1;
  std::size_t gc_batches = 20;
  bool gc_separate = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of end-to-end gradients");
  gradcheck->add_option("--method", gc_method, "Method name or 'all'")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--batches", gc_batches)->capture_default_str();
  gradcheck->add_flag("--separate-towers", gc_separate, "Check unshared query/passage towers");

  // compare
  std::string cmp_config, cmp_data, cmp_out;
  std::string cmp_methods = "dr,dr_cl,dr_cl_m,dr_dl,dr_dl_m,dr_st_dl,dr_st_dl_m";
  std::string cmp_seeds = "1,2,3,4,5";
  std::vector<std::string> cmp_sets;
  std::size_t cmp_jobs = 1;
  auto* compare = app.add_subcommand("compare", "Train and evaluate methods over seeds");
  compare->add_option("--config", cmp_config, "Run config file (INI)");
  compare->add_option("--data-dir", cmp_data)->required();
  compare->add_option("--methods", cmp_methods)->capture_default_str();
  compare->add_option("--seeds", cmp_seeds)->capture_default_str();
  compare->add_option("--out-dir", cmp_out)->required();
  compare->add_option("--set", cmp_sets, "Override: section.key=value");
  compare->add_option("--jobs", cmp_jobs, "Worker threads")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (auto* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return kExitUsage;
  }

  try {
    if (augment->parsed()) {
      aug_policy.validate();
      const auto queries = load_tsv(aug_queries);
      std::ostringstream o;
      std::size_t warnings = 0;
      for (const auto& [qid, text] : queries) {
        AugmentationPolicy p = aug_policy;
        p.seed = derive_seed(aug_policy.seed, {fnv1a64(qid)});
        const auto aug = generate_variants(text, p);
        warnings += aug.no_op_warning;
        for (std::size_t v = 0; v < aug.variants.size(); ++v)
          o << qid << '\t' << v << '\t' << aug.variants[v] << '\n';
      }
      detail::write_file(aug_out, o.str());
      if (warnings) err << "warning: " << warnings << " queries had no word eligible for typos\n";
      return kExitOk;
    }
    if (synth->parsed()) {
      save_benchmark(generate_synthetic(synth_cfg), synth_out);
      out << "wrote synthetic benchmark to " << synth_out << '\n';
      return kExitOk;
    }
    if (trainc->parsed()) {
      const auto cfg = detail::resolve_config(train_config, train_sets);
      const auto bench = load_benchmark(train_data);
      auto res = train(bench.train, cfg.method, cfg.train, cfg.encoder, cfg.training_policy());
      save_checkpoint(res.model, train_out);
      detail::write_file(train_out + ".config.ini", format_run_config(cfg));
      if (!train_log.empty()) detail::write_file(train_log, detail::format_log(res.log));
      if (res.duplicate_passages)
        err << "warning: " << res.duplicate_passages << " duplicate pool passages removed\n";
      if (!res.log.empty())
        out << "trained " << to_string(cfg.method.method) << " for " << res.log.size()
            << " steps, final loss " << res.log.back().loss << '\n';
      return kExitOk;
    }
    if (evaluate->parsed()) {
      const auto metrics = parse_metric_list(ev_metrics);
      const auto model = load_checkpoint(ev_ckpt);
      Dataset d = load_dataset(ev_collection, ev_queries, ev_qrels, "");
      const auto run = rank_corpus(model, d.queries, d.collection,
                                   required_depth(metrics, d.collection.size()));
      if (!ev_run.empty()) {
        std::ostringstream r;
        write_run(r, run);
        detail::write_file(ev_run, r.str());
      }
      std::ostringstream rep;
      rep << "setting\tmetric\tmean\tstddev\tqueries";
      for (std::size_t r = 0; r < ev_repeats; ++r) rep << "\trepeat_" << r;
      rep << '\n';
      std::size_t skipped = 0;
      for (const auto& m : metrics) {
        const auto mr = compute_metric(m, run, d.qrels);
        skipped = mr.skipped_queries;
        rep << "clean\t" << mr.metric << '\t' << format_double(mr.mean) << "\t0\t"
            << mr.per_query.size() << '\n';
        out << "clean " << mr.metric << " = " << mr.mean << '\n';
      }
      if (ev_repeats > 0) {
        AugmentationPolicy p;
        p.k = 1;
        p.seed = ev_seed;
        p.min_word_len = ev_min_word_len;
        const auto te = repeated_typo_eval(model, d.queries, d.collection, d.qrels, ev_repeats, p, metrics);
        for (const auto& mr : te.reports) {
          rep << "typo\t" << mr.metric << '\t' << format_double(mr.mean) << '\t'
              << format_double(mr.repeat_stddev) << '\t' << mr.per_query.size();
          for (double v : mr.per_repeat) rep << '\t' << format_double(v);
          rep << '\n';
          out << "typo  " << mr.metric << " = " << mr.mean << " (sd " << mr.repeat_stddev << ")\n";
        }
        if (te.augmentation_warnings)
          err << "warning: " << te.augmentation_warnings << " query corruptions were no-ops\n";
      }
      if (skipped) err << "warning: " << skipped << " queries without judgments skipped\n";
      detail::write_file(ev_report, rep.str());
      return kExitOk;
    }
    if (gradcheck->parsed()) {
      std::vector<Method> methods;
      if (to_lower(gc_method) == "all")
        methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
      else
        methods.push_back(parse_method(gc_method));
      double worst = 0.0;
      for (auto m : methods) {
        const auto r = gradcheck_method(m, gc_seed, gc_batches, !gc_separate);
        char line[160];
        std::snprintf(line, sizeof line, "%-11s max_rel_error %.3e", to_string(m), r.max_rel_error);
        out << line << "  (" << r.worst_param << ")\n";
        worst = std::max(worst, r.max_rel_error);
      }
      return worst < 1e-4 ? kExitOk : kExitNumerical;
    }
    if (compare->parsed()) {
      CompareOptions opt;
      opt.base = detail::resolve_config(cmp_config, cmp_sets);
      for (const auto& m : detail::split_list(cmp_methods)) opt.methods.push_back(parse_method(m));
      for (const auto& s : detail::split_list(cmp_seeds)) {
        if (s.find_first_not_of("0123456789") != std::string::npos)
          throw InvalidInput("--seeds: bad seed '" + s + "'");
        opt.seeds.push_back(std::stoull(s));
      }
      opt.jobs = cmp_jobs;
      const auto bench = load_benchmark(cmp_data);
      const auto result = run_compare(bench, opt);
      const std::filesystem::path dir(cmp_out);
      detail::write_file(dir / "resolved_config.ini", format_run_config(opt.base));
      detail::write_file(dir / "report.tsv", format_compare_report(result));
      detail::write_file(dir / "ttest.tsv", format_ttests(paired_comparisons(result)));
      for (const auto& c : result.cells) {
        const std::string stem = std::string(to_string(c.method)) + "_seed" + std::to_string(c.seed);
        detail::write_file(dir / "checkpoints" / (stem + ".ckpt"), serialize_checkpoint(c.model));
        detail::write_file(dir / "logs" / (stem + ".tsv"), detail::format_log(c.log));
      }
      const std::string headline = result.metrics.front().name();
      for (auto m : result.methods) {
        char line[160];
        std::snprintf(line, sizeof line, "%-11s clean %s %.4f  typo %s %.4f", to_string(m),
                      headline.c_str(), result.seed_mean(m, false, headline), headline.c_str(),
                      result.seed_mean(m, true, headline));
        out << line << '\n';
      }
      return kExitOk;
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const InvalidInput& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace typodr
