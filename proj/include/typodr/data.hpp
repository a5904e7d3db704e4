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
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "typodr/common.hpp"
#include "typodr/ranking.hpp"
#include "typodr/rng.hpp"

namespace typodr {

using TextMap = std::map<std::string, std::string, IdLess>;

struct TrainingTriple {
  std::string qid;
  std::string pos_pid;
  std::vector<std::string> neg_pids;
  friend bool operator==(const TrainingTriple&, const TrainingTriple&) = default;
};

struct Dataset {
  TextMap collection;  // pid -> passage text
  TextMap queries;     // qid -> query text
  Qrels qrels;
  std::vector<TrainingTriple> triples;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// "id<TAB>text" per line.
inline TextMap parse_tsv(std::istream& in, const std::string& source) {
  TextMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos)
      throw DataError(source + ":" + std::to_string(lineno) + ": expected 'id<TAB>text'");
    std::string id = line.substr(0, tab);
    if (!out.emplace(id, line.substr(tab + 1)).second)
      throw DataError(source + ":" + std::to_string(lineno) + ": duplicate id " + id);
  }
  return out;
}

inline TextMap load_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_tsv(in, path);
}

inline void write_tsv(std::ostream& out, const TextMap& m) {
  for (const auto& [id, text] : m) {
    if (text.find('\t') != std::string::npos || text.find('\n') != std::string::npos)
      throw DataError("text for id " + id + " contains a tab or newline");
    out << id << '\t' << text << '\n';
  }
}

// One JSON object per line: {"qid": ..., "pos_pid": ..., "neg_pids": [...]}.
inline std::vector<TrainingTriple> parse_triples(std::istream& in, const std::string& source) {
  std::vector<TrainingTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrainingTriple t;
      t.qid = j.at("qid").get<std::string>();
      t.pos_pid = j.at("pos_pid").get<std::string>();
      t.neg_pids = j.at("neg_pids").get<std::vector<std::string>>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(source + ":" + std::to_string(lineno) + ": bad triple record (" + e.what() +
                      ")");
    }
  }
  return out;
}

inline void write_triples(std::ostream& out, const std::vector<TrainingTriple>& triples) {
  for (const auto& t : triples) {
    nlohmann::json j;
    j["qid"] = t.qid;
    j["pos_pid"] = t.pos_pid;
    j["neg_pids"] = t.neg_pids;
    out << j.dump() << '\n';
  }
}

// Throws DataError listing every dangling id.
inline void check_integrity(const Dataset& d) {
  std::set<std::string, IdLess> missing_pids, missing_qids;
  std::vector<std::string> bad;
  for (const auto& t : d.triples) {
    if (!d.queries.count(t.qid)) missing_qids.insert(t.qid);
    if (!d.collection.count(t.pos_pid)) missing_pids.insert(t.pos_pid);
    for (const auto& n : t.neg_pids) {
      if (!d.collection.count(n)) missing_pids.insert(n);
      if (n == t.pos_pid) bad.push_back(t.qid);
    }
  }
  for (const auto& [qid, judged] : d.qrels)
    for (const auto& [pid, grade] : judged)
      if (!d.collection.count(pid)) missing_pids.insert(pid);
  if (missing_pids.empty() && missing_qids.empty() && bad.empty()) return;
  std::string msg = "referential integrity error:";
  if (!missing_pids.empty()) {
    msg += " missing pid";
    for (const auto& p : missing_pids) msg += " " + p;
    msg += ";";
  }
  if (!missing_qids.empty()) {
    msg += " missing qid";
    for (const auto& q : missing_qids) msg += " " + q;
    msg += ";";
  }
  if (!bad.empty()) {
    msg += " positive listed as negative for qid";
    for (const auto& q : bad) msg += " " + q;
  }
  throw DataError(msg);
}

// Any path may be empty to skip that component (e.g. no triples for eval).
inline Dataset load_dataset(const std::string& collection_path, const std::string& queries_path,
                            const std::string& qrels_path, const std::string& triples_path) {
  Dataset d;
  d.collection = load_tsv(collection_path);
  if (!queries_path.empty()) d.queries = load_tsv(queries_path);
  if (!qrels_path.empty()) d.qrels = load_qrels(qrels_path);
  if (!triples_path.empty()) {
    std::ifstream in(triples_path);
    if (!in) throw DataError("cannot open " + triples_path);
    d.triples = parse_triples(in, triples_path);
  }
  check_integrity(d);
  return d;
}

// Layout of a benchmark directory.
struct BenchmarkFiles {
  std::filesystem::path dir;
  std::string collection() const { return (dir / "collection.tsv").string(); }
  std::string train_queries() const { return (dir / "train_queries.tsv").string(); }
  std::string train_qrels() const { return (dir / "train_qrels.txt").string(); }
  std::string train_triples() const { return (dir / "train_triples.jsonl").string(); }
  std::string eval_queries() const { return (dir / "eval_queries.tsv").string(); }
  std::string eval_qrels() const { return (dir / "eval_qrels.txt").string(); }
};

struct Benchmark {
  Dataset train;  // collection + train queries, qrels, triples
  Dataset eval;   // collection + eval queries, qrels
  friend bool operator==(const Benchmark&, const Benchmark&) = default;
};

inline Benchmark load_benchmark(const std::filesystem::path& dir) {
  const BenchmarkFiles f{dir};
  Benchmark b;
  b.train = load_dataset(f.collection(), f.train_queries(), f.train_qrels(), f.train_triples());
  b.eval.collection = b.train.collection;
  if (std::filesystem::exists(f.eval_queries())) {
    b.eval.queries = load_tsv(f.eval_queries());
    b.eval.qrels = load_qrels(f.eval_qrels());
  }
  check_integrity(b.eval);
  return b;
}

inline void save_benchmark(const Benchmark& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const BenchmarkFiles f{dir};
  auto open = [](const std::string& p) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw DataError("cannot write " + p);
    return o;
  };
  {
    auto o = open(f.collection());
    write_tsv(o, b.train.collection);
  }
  {
    auto o = open(f.train_queries());
    write_tsv(o, b.train.queries);
  }
  {
    auto o = open(f.train_qrels());
    write_qrels(o, b.train.qrels);
  }
  {
    auto o = open(f.train_triples());
    write_triples(o, b.train.triples);
  }
  {
    auto o = open(f.eval_queries());
    write_tsv(o, b.eval.queries);
  }
  {
    auto o = open(f.eval_qrels());
    write_qrels(o, b.eval.qrels);
  }
}

inline constexpr double kZipfExponent = 1.0;

struct SynthConfig {
  std::size_t num_passages = 2000;
  std::size_t num_train_queries = 500;
  std::size_t num_eval_queries = 200;
  std::size_t vocab_size = 1500;
  std::size_t passage_len_words = 24;
  std::size_t query_len_words = 3;
  std::size_t hard_negatives_per_query = 3;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw InvalidInput("synthetic config: " + m); };
    if (num_passages < 1 || num_train_queries < 1 || num_eval_queries < 1 || vocab_size < 1 ||
        passage_len_words < 1 || query_len_words < 1)
      fail("all counts must be >= 1");
    if (num_passages < num_train_queries + num_eval_queries)
      fail("num_passages must be >= num_train_queries + num_eval_queries");
    if (passage_len_words > vocab_size) fail("passage_len_words exceeds vocab_size");
    if (query_len_words > passage_len_words) fail("query_len_words exceeds passage_len_words");
    if (hard_negatives_per_query > num_passages - num_train_queries - num_eval_queries)
      fail("not enough unjudged passages for hard_negatives_per_query");
    if (vocab_size > 200000) fail("vocab_size too large for the pseudo-word generator");
  }
};

// Pseudo-words: 2-3 consonant-vowel syllables.
inline std::vector<std::string> pseudo_vocabulary(std::size_t n, SplitMix64& rng) {
  static constexpr std::string_view consonants = "bcdfghjklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  std::vector<std::string> vocab;
  std::set<std::string> seen;
  while (vocab.size() < n) {
    const std::size_t syllables = 2 + rng.uniform_index(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w.push_back(consonants[rng.uniform_index(consonants.size())]);
      w.push_back(vowels[rng.uniform_index(vowels.size())]);
    }
    if (seen.insert(w).second) vocab.push_back(std::move(w));
  }
  return vocab;
}

// Seeded synthetic retrieval benchmark. Each query draws query_len_words
// distinct words from its single relevant passage; its hard negatives are the
// passages judged for no query that share the most query words (ties broken
// by a seeded key).
inline Benchmark generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);
  const auto vocab = pseudo_vocabulary(cfg.vocab_size, rng);

  // Word frequencies follow a Zipf law over the vocabulary order.
  std::vector<double> cdf(cfg.vocab_size);
  double total = 0.0;
  for (std::size_t r = 0; r < cfg.vocab_size; ++r) {
    total += std::pow(static_cast<double>(r + 1), -kZipfExponent);
    cdf[r] = total;
  }
  std::vector<std::vector<std::size_t>> passage_words(cfg.num_passages);
  std::vector<char> used(cfg.vocab_size, 0);
  Benchmark b;
  for (std::size_t p = 0; p < cfg.num_passages; ++p) {
    auto& words = passage_words[p];
    while (words.size() < cfg.passage_len_words) {
      const double u = rng.uniform01() * total;
      std::size_t w = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      w = std::min(w, cfg.vocab_size - 1);
      if (used[w]) continue;
      used[w] = 1;
      words.push_back(w);
    }
    for (auto w : words) used[w] = 0;
    std::string text;
    for (auto w : passage_words[p]) {
      if (!text.empty()) text.push_back(' ');
      text += vocab[w];
    }
    b.train.collection.emplace(std::to_string(p), std::move(text));
  }
  b.eval.collection = b.train.collection;

  std::vector<std::vector<std::size_t>> postings(cfg.vocab_size);
  for (std::size_t p = 0; p < cfg.num_passages; ++p)
    for (auto w : passage_words[p]) postings[w].push_back(p);

  std::vector<std::size_t> order(cfg.num_passages);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, rng);
  const std::uint64_t tie_seed = rng.next();

  const std::size_t total_queries = cfg.num_train_queries + cfg.num_eval_queries;
  std::vector<char> judged(cfg.num_passages, 0);
  for (std::size_t q = 0; q < total_queries; ++q) judged[order[q]] = 1;
  std::vector<std::size_t> overlap(cfg.num_passages, 0);
  for (std::size_t q = 0; q < total_queries; ++q) {
    const std::size_t rel = order[q];
    auto words = passage_words[rel];
    for (std::size_t i = 0; i < cfg.query_len_words; ++i) {
      const std::size_t j = i + rng.uniform_index(words.size() - i);
      std::swap(words[i], words[j]);
    }
    words.resize(cfg.query_len_words);
    std::string text;
    for (auto w : words) {
      if (!text.empty()) text.push_back(' ');
      text += vocab[w];
    }
    const std::string qid = std::to_string(q);
    const std::string pid = std::to_string(rel);
    const bool is_train = q < cfg.num_train_queries;
    Dataset& d = is_train ? b.train : b.eval;
    d.queries.emplace(qid, std::move(text));
    d.qrels[qid][pid] = 1;
    if (!is_train) continue;

    std::vector<std::size_t> touched;
    for (auto w : words)
      for (auto p : postings[w]) {
        if (judged[p]) continue;
        if (overlap[p]++ == 0) touched.push_back(p);
      }
    std::vector<std::size_t> cands;
    if (touched.size() < cfg.hard_negatives_per_query) {
      // pad with zero-overlap passages in seeded order
      cands = touched;
      for (std::size_t p = 0; p < cfg.num_passages && cands.size() < cfg.hard_negatives_per_query;
           ++p) {
        const std::size_t c = order[(q + 1 + p) % cfg.num_passages];
        if (!judged[c] && overlap[c] == 0) cands.push_back(c);
      }
    } else {
      cands = touched;
    }
    auto tie_key = [&](std::size_t p) { return derive_seed(tie_seed, {q, p}); };
    std::sort(cands.begin(), cands.end(), [&](std::size_t a, std::size_t c) {
      if (overlap[a] != overlap[c]) return overlap[a] > overlap[c];
      return tie_key(a) < tie_key(c);
    });
    cands.resize(cfg.hard_negatives_per_query);
    TrainingTriple t{qid, pid, {}};
    for (auto c : cands) t.neg_pids.push_back(std::to_string(c));
    b.train.triples.push_back(std::move(t));
    for (auto p : touched) overlap[p] = 0;
  }
  return b;
}

}  // namespace typodr
