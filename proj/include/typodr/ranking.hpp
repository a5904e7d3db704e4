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
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "typodr/common.hpp"

namespace typodr {

struct IdLess {
  bool operator()(const std::string& a, const std::string& b) const { return id_less(a, b); }
};

// qid -> (pid -> grade >= 1)
using Qrels = std::map<std::string, std::map<std::string, int, IdLess>, IdLess>;

struct ScoredPassage {
  std::string pid;
  double score = 0.0;
  friend bool operator==(const ScoredPassage&, const ScoredPassage&) = default;
};

// qid -> passages by descending score
using Run = std::map<std::string, std::vector<ScoredPassage>, IdLess>;

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// "qid 0 pid grade" per line; grade-0 judgments are dropped.
inline Qrels parse_qrels(std::istream& in, const std::string& source = "<qrels>") {
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string qid, iter, pid, grade_s, extra;
    if (!(ls >> qid >> iter >> pid >> grade_s) || (ls >> extra))
      throw DataError(source + ":" + std::to_string(lineno) +
                      ": expected 4 columns 'qid 0 pid grade'");
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(grade_s, &used);
      if (used != grade_s.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(source + ":" + std::to_string(lineno) + ": bad relevance grade '" + grade_s +
                      "'");
    }
    if (grade < 0)
      throw DataError(source + ":" + std::to_string(lineno) + ": negative relevance grade");
    if (grade > 0) qrels[qid][pid] = grade;
  }
  return qrels;
}

inline Qrels load_qrels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open qrels file " + path);
  return parse_qrels(in, path);
}

inline void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [qid, judged] : qrels)
    for (const auto& [pid, grade] : judged) out << qid << " 0 " << pid << ' ' << grade << '\n';
}

// TREC run format: "qid Q0 pid rank score tag", rank from 1.
inline void write_run(std::ostream& out, const Run& run, const std::string& tag = "typodr") {
  for (const auto& [qid, ranked] : run)
    for (std::size_t r = 0; r < ranked.size(); ++r)
      out << qid << " Q0 " << ranked[r].pid << ' ' << (r + 1) << ' '
          << format_double(ranked[r].score) << ' ' << tag << '\n';
}

inline Run parse_run(std::istream& in, const std::string& source = "<run>") {
  Run run;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string qid, q0, pid, tag;
    std::size_t rank = 0;
    double score = 0.0;
    if (!(ls >> qid >> q0 >> pid >> rank >> score >> tag))
      throw DataError(source + ":" + std::to_string(lineno) +
                      ": expected 6 columns 'qid Q0 pid rank score tag'");
    run[qid].push_back({pid, score});
  }
  for (auto& [qid, ranked] : run)
    for (std::size_t i = 1; i < ranked.size(); ++i)
      if (ranked[i].score > ranked[i - 1].score)
        throw DataError(source + ": scores for query " + qid + " are not non-increasing");
  return run;
}

}  // namespace typodr
