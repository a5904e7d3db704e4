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

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "typodr/common.hpp"
#include "typodr/encoder.hpp"
#include "typodr/ranking.hpp"

namespace typodr {

// Text checkpoint:
//
//   typodr-checkpoint 1
//   ngram_n <n>
//   num_buckets <n>
//   embed_dim <n>
//   shared_weights <0|1>
//   towers <1|2>
//   tower <t>
//   embedding <rows> <cols>
//   <one row per line, %.17g, space separated>
//   projection <rows> <cols>
//   ...
//   projection_bias <n>
//   <one line>
//   checksum <16 hex digits: FNV-1a 64 of every byte above this line>
//
// %.17g round-trips IEEE doubles exactly through strtod.
inline std::string serialize_checkpoint(const DualEncoder& model) {
  std::ostringstream o;
  const auto& c = model.config;
  o << "typodr-checkpoint 1\n"
    << "ngram_n " << c.ngram_n << "\nnum_buckets " << c.num_buckets << "\nembed_dim "
    << c.embed_dim << "\nshared_weights " << (c.shared_weights ? 1 : 0) << "\ntowers "
    << model.towers.size() << '\n';
  auto put_matrix = [&](const char* name, const Matrix& m) {
    o << name << ' ' << m.rows << ' ' << m.cols << '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t col = 0; col < m.cols; ++col) {
        if (col) o << ' ';
        o << format_double(m(r, col));
      }
      o << '\n';
    }
  };
  for (std::size_t t = 0; t < model.towers.size(); ++t) {
    const auto& p = model.towers[t];
    o << "tower " << t << '\n';
    put_matrix("embedding", p.embedding);
    put_matrix("projection", p.projection);
    o << "projection_bias " << p.projection_bias.size() << '\n';
    for (std::size_t i = 0; i < p.projection_bias.size(); ++i) {
      if (i) o << ' ';
      o << format_double(p.projection_bias[i]);
    }
    o << '\n';
  }
  std::string body = o.str();
  char sum[64];
  std::snprintf(sum, sizeof sum, "checksum %016" PRIx64 "\n", fnv1a64(body));
  return body + sum;
}

namespace detail {

class CheckpointReader {
 public:
  CheckpointReader(const std::string& text, const std::string& source)
      : text_(text), source_(source) {}

  std::string line() {
    if (pos_ >= text_.size()) throw CorruptionError(source_ + ": truncated checkpoint");
    const auto nl = text_.find('\n', pos_);
    if (nl == std::string::npos) throw CorruptionError(source_ + ": truncated checkpoint");
    std::string l = text_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return l;
  }

  std::size_t keyed_count(const std::string& key) {
    const auto l = line();
    std::istringstream s(l);
    std::string k;
    std::size_t v = 0;
    if (!(s >> k >> v) || k != key)
      throw CorruptionError(source_ + ": expected '" + key + " <count>', got '" + l + "'");
    return v;
  }

  void read_values(double* out, std::size_t n) {
    const auto l = line();
    const char* p = l.c_str();
    for (std::size_t i = 0; i < n; ++i) {
      char* end = nullptr;
      errno = 0;
      out[i] = std::strtod(p, &end);
      if (end == p) throw CorruptionError(source_ + ": malformed number in parameter row");
      p = end;
    }
    while (*p == ' ') ++p;
    if (*p != '\0') throw CorruptionError(source_ + ": extra values in parameter row");
  }

  Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) {
    const auto l = line();
    std::istringstream s(l);
    std::string k;
    std::size_t r = 0, c = 0;
    if (!(s >> k >> r >> c) || k != name)
      throw CorruptionError(source_ + ": expected '" + name + " <rows> <cols>'");
    if (r != rows || c != cols)
      throw IncompatibleError(source_ + ": " + name + " shape " + std::to_string(r) + "x" +
                              std::to_string(c) + " does not match config " +
                              std::to_string(rows) + "x" + std::to_string(cols));
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) read_values(m.row(i), c);
    return m;
  }

  std::size_t position() const { return pos_; }

 private:
  const std::string& text_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline DualEncoder deserialize_checkpoint(const std::string& text,
                                          const std::string& source = "<checkpoint>") {
  // Verify the checksum line first so truncation surfaces as corruption.
  const auto tail = text.rfind("checksum ");
  if (tail == std::string::npos || (tail > 0 && text[tail - 1] != '\n'))
    throw CorruptionError(source + ": missing checksum (truncated checkpoint?)");
  {
    std::uint64_t stored = 0;
    char hex[17] = {};
    if (std::sscanf(text.c_str() + tail, "checksum %16[0-9a-f]", hex) != 1 ||
        std::string(hex).size() != 16)
      throw CorruptionError(source + ": malformed checksum line");
    stored = std::strtoull(hex, nullptr, 16);
    if (stored != fnv1a64(std::string_view(text).substr(0, tail)))
      throw CorruptionError(source + ": checksum mismatch");
  }
  detail::CheckpointReader rd(text, source);
  if (rd.line() != "typodr-checkpoint 1")
    throw IncompatibleError(source + ": not a typodr checkpoint (version 1)");
  EncoderConfig cfg;
  cfg.ngram_n = rd.keyed_count("ngram_n");
  cfg.num_buckets = rd.keyed_count("num_buckets");
  cfg.embed_dim = rd.keyed_count("embed_dim");
  cfg.shared_weights = rd.keyed_count("shared_weights") != 0;
  const std::size_t towers = rd.keyed_count("towers");
  try {
    cfg.validate();
  } catch (const InvalidInput& e) {
    throw IncompatibleError(source + ": " + e.what());
  }
  if (towers != (cfg.shared_weights ? 1u : 2u))
    throw IncompatibleError(source + ": tower count does not match shared_weights");
  DualEncoder model{cfg, {}};
  for (std::size_t t = 0; t < towers; ++t) {
    if (rd.keyed_count("tower") != t) throw CorruptionError(source + ": towers out of order");
    EncoderParams p;
    p.embedding = rd.matrix("embedding", cfg.num_buckets, cfg.embed_dim);
    p.projection = rd.matrix("projection", cfg.embed_dim, cfg.embed_dim);
    const std::size_t nb = rd.keyed_count("projection_bias");
    if (nb != cfg.embed_dim) throw IncompatibleError(source + ": bias length mismatch");
    p.projection_bias.resize(nb);
    rd.read_values(p.projection_bias.data(), nb);
    model.towers.push_back(std::move(p));
  }
  if (rd.position() != tail) throw CorruptionError(source + ": trailing data before checksum");
  return model;
}

inline void save_checkpoint(const DualEncoder& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << serialize_checkpoint(model);
  if (!out) throw DataError("failed writing checkpoint " + path);
}

inline DualEncoder load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return deserialize_checkpoint(s.str(), path);
}

}  // namespace typodr
