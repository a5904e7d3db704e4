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

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <type_traits>
#include <sstream>
#include <string>

#include "typodr/common.hpp"
#include "typodr/encoder.hpp"
#include "typodr/eval.hpp"
#include "typodr/losses.hpp"
#include "typodr/ranking.hpp"
#include "typodr/trainer.hpp"
#include "typodr/typo_gen.hpp"

namespace typodr {

struct EvalSettings {
  std::string metrics = "mrr@10,recall@1000,ndcg@10,map";
  std::size_t typo_repeats = 10;
  std::uint64_t seed = 0;
};

// Everything one experiment needs, read from an INI-style file:
//
//   [method]   name w1 w2 w beta gamma sigma k cl_sampling
//   [train]    batch_size hard_negatives_per_query learning_rate warmup_steps
//              total_steps weight_decay adam_beta1 adam_beta2 adam_epsilon
//              seed freeze_typos
//   [encoder]  ngram_n num_buckets embed_dim shared_weights
//   [augment]  min_word_len transforms_per_variant
//   [eval]     metrics typo_repeats seed
//
// Unknown sections or keys are errors; missing keys keep their defaults.
struct RunConfig {
  MethodConfig method;
  TrainConfig train;
  EncoderConfig encoder;
  AugmentationPolicy augment;
  EvalSettings eval;

  AugmentationPolicy training_policy() const {
    AugmentationPolicy p = augment;
    p.k = method.k;
    return p;
  }

  void validate() const {
    method.validate();
    train.validate();
    encoder.validate();
    augment.validate();
    parse_metric_list(eval.metrics);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v, const std::string& where) {
  std::istringstream s(v);
  T out{};
  char extra;
  if (!(s >> out) || (s >> extra)) throw InvalidInput(where + ": bad value '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  const auto s = to_lower(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InvalidInput(where + ": expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> m;
    auto num = [](auto member) {
      return [member](RunConfig& c, const std::string& v, const std::string& w) {
        auto& field = member(c);
        field = parse_number<std::remove_reference_t<decltype(field)>>(v, w);
      };
    };
    m["method.name"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.method.method = parse_method(v);
    };
    m["method.w1"] = num([](RunConfig& c) -> double& { return c.method.w1; });
    m["method.w2"] = num([](RunConfig& c) -> double& { return c.method.w2; });
    m["method.w"] = num([](RunConfig& c) -> double& { return c.method.w; });
    m["method.beta"] = num([](RunConfig& c) -> double& { return c.method.beta; });
    m["method.gamma"] = num([](RunConfig& c) -> double& { return c.method.gamma; });
    m["method.sigma"] = num([](RunConfig& c) -> double& { return c.method.sigma; });
    m["method.k"] = num([](RunConfig& c) -> std::size_t& { return c.method.k; });
    m["method.cl_sampling"] = [](RunConfig& c, const std::string& v, const std::string& w) {
      const auto s = to_lower(v);
      if (s == "round_robin") c.method.cl_sampling = VariantSampling::RoundRobin;
      else if (s == "seeded") c.method.cl_sampling = VariantSampling::Seeded;
      else throw InvalidInput(w + ": expected round_robin or seeded");
    };
    m["train.batch_size"] = num([](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    m["train.hard_negatives_per_query"] =
        num([](RunConfig& c) -> std::size_t& { return c.train.hard_negatives_per_query; });
    m["train.learning_rate"] = num([](RunConfig& c) -> double& { return c.train.learning_rate; });
    m["train.warmup_steps"] = num([](RunConfig& c) -> std::size_t& { return c.train.warmup_steps; });
    m["train.total_steps"] = num([](RunConfig& c) -> std::size_t& { return c.train.total_steps; });
    m["train.weight_decay"] = num([](RunConfig& c) -> double& { return c.train.weight_decay; });
    m["train.adam_beta1"] = num([](RunConfig& c) -> double& { return c.train.adam_beta1; });
    m["train.adam_beta2"] = num([](RunConfig& c) -> double& { return c.train.adam_beta2; });
    m["train.adam_epsilon"] = num([](RunConfig& c) -> double& { return c.train.adam_epsilon; });
    m["train.seed"] = num([](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
    m["train.freeze_typos"] = [](RunConfig& c, const std::string& v, const std::string& w) {
      c.train.freeze_typos = parse_bool(v, w);
    };
    m["encoder.ngram_n"] = num([](RunConfig& c) -> std::size_t& { return c.encoder.ngram_n; });
    m["encoder.num_buckets"] = num([](RunConfig& c) -> std::size_t& { return c.encoder.num_buckets; });
    m["encoder.embed_dim"] = num([](RunConfig& c) -> std::size_t& { return c.encoder.embed_dim; });
    m["encoder.shared_weights"] = [](RunConfig& c, const std::string& v, const std::string& w) {
      c.encoder.shared_weights = parse_bool(v, w);
    };
    m["augment.min_word_len"] = num([](RunConfig& c) -> std::size_t& { return c.augment.min_word_len; });
    m["augment.transforms_per_variant"] =
        num([](RunConfig& c) -> std::size_t& { return c.augment.transforms_per_variant; });
    m["eval.metrics"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.eval.metrics = v;
    };
    m["eval.typo_repeats"] = num([](RunConfig& c) -> std::size_t& { return c.eval.typo_repeats; });
    m["eval.seed"] = num([](RunConfig& c) -> std::uint64_t& { return c.eval.seed; });
    return m;
  }();
  return setters;
}

}  // namespace detail

// Applies one "section.key = value" assignment.
inline void set_config_value(RunConfig& cfg, const std::string& dotted_key,
                             const std::string& value, const std::string& where = "config") {
  const auto& setters = detail::config_setters();
  auto it = setters.find(dotted_key);
  if (it == setters.end()) throw InvalidInput(where + ": unknown key '" + dotted_key + "'");
  it->second(cfg, value, where + ": " + dotted_key);
}

inline RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    if (auto hash = line.find_first_of("#;"); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidInput(where + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> known = {"method", "train", "encoder", "augment", "eval"};
      if (!known.count(section)) throw InvalidInput(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput(where + ": expected 'key = value'");
    if (section.empty()) throw InvalidInput(where + ": key outside of any section");
    set_config_value(cfg, section + "." + detail::trim(line.substr(0, eq)),
                     detail::trim(line.substr(eq + 1)), where);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  return parse_run_config(in, path);
}

// Fully resolved config in the same format parse_run_config reads.
inline std::string format_run_config(const RunConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[method]\nname = " << to_string(c.method.method) << "\nw1 = " << format_double(c.method.w1)
    << "\nw2 = " << format_double(c.method.w2) << "\nw = " << format_double(c.method.w)
    << "\nbeta = " << format_double(c.method.beta) << "\ngamma = " << format_double(c.method.gamma)
    << "\nsigma = " << format_double(c.method.sigma) << "\nk = " << c.method.k
    << "\ncl_sampling = "
    << (c.method.cl_sampling == VariantSampling::RoundRobin ? "round_robin" : "seeded") << "\n\n";
  o << "[train]\nbatch_size = " << c.train.batch_size
    << "\nhard_negatives_per_query = " << c.train.hard_negatives_per_query
    << "\nlearning_rate = " << format_double(c.train.learning_rate)
    << "\nwarmup_steps = " << c.train.warmup_steps << "\ntotal_steps = " << c.train.total_steps
    << "\nweight_decay = " << format_double(c.train.weight_decay)
    << "\nadam_beta1 = " << format_double(c.train.adam_beta1)
    << "\nadam_beta2 = " << format_double(c.train.adam_beta2)
    << "\nadam_epsilon = " << format_double(c.train.adam_epsilon) << "\nseed = " << c.train.seed
    << "\nfreeze_typos = " << b(c.train.freeze_typos) << "\n\n";
  o << "[encoder]\nngram_n = " << c.encoder.ngram_n << "\nnum_buckets = " << c.encoder.num_buckets
    << "\nembed_dim = " << c.encoder.embed_dim
    << "\nshared_weights = " << b(c.encoder.shared_weights) << "\n\n";
  o << "[augment]\nmin_word_len = " << c.augment.min_word_len
    << "\ntransforms_per_variant = " << c.augment.transforms_per_variant << "\n\n";
  o << "[eval]\nmetrics = " << c.eval.metrics << "\ntypo_repeats = " << c.eval.typo_repeats
    << "\nseed = " << c.eval.seed << '\n';
  return o.str();
}

}  // namespace typodr
