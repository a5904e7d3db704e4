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

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "typodr/common.hpp"
#include "typodr/rng.hpp"

namespace typodr {

struct EncoderConfig {
  std::size_t ngram_n = 3;
  std::size_t num_buckets = 4096;
  std::size_t embed_dim = 64;
  bool shared_weights = true;

  void validate() const {
    if (ngram_n < 2) throw InvalidInput("encoder: ngram_n must be >= 2");
    if (num_buckets < 16) throw InvalidInput("encoder: num_buckets must be >= 16");
    if (embed_dim < 2) throw InvalidInput("encoder: embed_dim must be >= 2");
  }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Bucket ids with multiplicity, in n-gram order.
struct TokenBag {
  std::vector<std::uint32_t> bucket_ids;
};

// Standard deviation of the initial embedding entries.
inline constexpr double kEmbeddingInitScale = 3.0;

// One tower: embedding [num_buckets x dim], projection [dim x dim] (out x in),
// bias [dim].
struct EncoderParams {
  Matrix embedding;
  Matrix projection;
  std::vector<double> projection_bias;

  std::size_t dim() const { return projection.rows; }

  static EncoderParams zeros(const EncoderConfig& cfg) {
    EncoderParams p;
    p.embedding = Matrix(cfg.num_buckets, cfg.embed_dim);
    p.projection = Matrix(cfg.embed_dim, cfg.embed_dim);
    p.projection_bias.assign(cfg.embed_dim, 0.0);
    return p;
  }

  // Embedding rows ~ N(0, embed_scale^2); projection = I + N(0, (0.1/sqrt(dim))^2); bias 0.
  static EncoderParams random(const EncoderConfig& cfg, SplitMix64& rng,
                              double embed_scale = kEmbeddingInitScale) {
    auto p = zeros(cfg);
    for (auto& x : p.embedding.data) x = embed_scale * rng.normal();
    const double s = 0.1 / std::sqrt(static_cast<double>(cfg.embed_dim));
    for (std::size_t r = 0; r < cfg.embed_dim; ++r)
      for (std::size_t c = 0; c < cfg.embed_dim; ++c)
        p.projection(r, c) = (r == c ? 1.0 : 0.0) + s * rng.normal();
    return p;
  }

  void check_shapes(const EncoderConfig& cfg) const {
    if (embedding.rows != cfg.num_buckets || embedding.cols != cfg.embed_dim ||
        projection.rows != cfg.embed_dim || projection.cols != cfg.embed_dim ||
        projection_bias.size() != cfg.embed_dim)
      throw InvalidInput("encoder: parameter shapes do not match config");
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Gradient of one encode() call. Embedding rows are sparse: only rows touched
// by the bag appear, keyed by bucket id.
struct EncoderGrads {
  std::map<std::uint32_t, std::vector<double>> embedding_rows;
  Matrix projection;
  std::vector<double> projection_bias;
};

inline std::uint32_t hash_ngram(std::string_view gram, std::size_t num_buckets) {
  return static_cast<std::uint32_t>(fnv1a64(gram) % num_buckets);
}

// Lowercases, pads each whitespace-delimited word as "#word#", and hashes every
// contiguous n-gram (FNV-1a 64 mod num_buckets). A padded word shorter than n
// contributes itself as a single gram. Empty text maps to {hash("#")}.
inline TokenBag tokenize(std::string_view text, const EncoderConfig& cfg) {
  TokenBag bag;
  const std::string lowered = to_lower(text);
  std::string padded;
  for (auto word : split_whitespace(lowered)) {
    padded.assign("#");
    padded.append(word);
    padded.push_back('#');
    if (padded.size() <= cfg.ngram_n) {
      bag.bucket_ids.push_back(hash_ngram(padded, cfg.num_buckets));
      continue;
    }
    for (std::size_t i = 0; i + cfg.ngram_n <= padded.size(); ++i)
      bag.bucket_ids.push_back(
          hash_ngram(std::string_view(padded).substr(i, cfg.ngram_n), cfg.num_buckets));
  }
  if (bag.bucket_ids.empty()) bag.bucket_ids.push_back(hash_ngram("#", cfg.num_buckets));
  return bag;
}

// Mean of the embedding rows of `bag`.
inline std::vector<double> pool(const EncoderParams& params, const TokenBag& bag) {
  if (bag.bucket_ids.empty()) throw InvalidInput("encode: empty token bag");
  const std::size_t d = params.embedding.cols;
  std::vector<double> h(d, 0.0);
  for (auto b : bag.bucket_ids) {
    if (b >= params.embedding.rows) throw InvalidInput("encode: bucket id out of range");
    const double* row = params.embedding.row(b);
    for (std::size_t j = 0; j < d; ++j) h[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(bag.bucket_ids.size());
  for (auto& x : h) x *= inv;
  return h;
}

// projection * pool(bag) + bias.
inline std::vector<double> encode(const EncoderParams& params, const TokenBag& bag) {
  const auto h = pool(params, bag);
  const std::size_t d = params.projection.rows;
  std::vector<double> y(params.projection_bias);
  for (std::size_t r = 0; r < d; ++r) {
    const double* w = params.projection.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < h.size(); ++c) acc += w[c] * h[c];
    y[r] += acc;
  }
  return y;
}

// Gradient of dot(grad_out, encode(params, bag)) w.r.t. the parameters.
inline EncoderGrads encode_backward(const EncoderParams& params, const TokenBag& bag,
                                    std::span<const double> grad_out) {
  const std::size_t d = params.projection.rows;
  if (grad_out.size() != d)
    throw InvalidInput("encode_backward: grad_out has length " + std::to_string(grad_out.size()) +
                       ", expected " + std::to_string(d));
  const auto h = pool(params, bag);
  EncoderGrads g;
  g.projection = Matrix(d, d);
  g.projection_bias.assign(grad_out.begin(), grad_out.end());
  std::vector<double> dh(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const double* w = params.projection.row(r);
    double* gw = g.projection.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      gw[c] = grad_out[r] * h[c];
      dh[c] += w[c] * grad_out[r];
    }
  }
  const double inv = 1.0 / static_cast<double>(bag.bucket_ids.size());
  for (auto b : bag.bucket_ids) {
    auto [it, inserted] = g.embedding_rows.try_emplace(b, d, 0.0);
    for (std::size_t j = 0; j < d; ++j) it->second[j] += dh[j] * inv;
  }
  return g;
}

// Which tower a text goes through.
enum class Side : std::uint8_t { Query, Passage };

// The dual encoder: one tower when shared_weights, otherwise [query, passage].
struct DualEncoder {
  EncoderConfig config;
  std::vector<EncoderParams> towers;

  static DualEncoder zeros(const EncoderConfig& cfg) {
    cfg.validate();
    DualEncoder m{cfg, {}};
    m.towers.assign(cfg.shared_weights ? 1 : 2, EncoderParams::zeros(cfg));
    return m;
  }

  static DualEncoder random(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DualEncoder m{cfg, {}};
    SplitMix64 rng(seed);
    const std::size_t n = cfg.shared_weights ? 1 : 2;
    for (std::size_t i = 0; i < n; ++i) m.towers.push_back(EncoderParams::random(cfg, rng));
    return m;
  }

  std::size_t tower_index(Side s) const {
    return (towers.size() == 1 || s == Side::Query) ? 0 : 1;
  }
  const EncoderParams& tower(Side s) const { return towers[tower_index(s)]; }
  EncoderParams& tower(Side s) { return towers[tower_index(s)]; }

  std::vector<double> encode_text(std::string_view text, Side s) const {
    return encode(tower(s), tokenize(text, config));
  }

  friend bool operator==(const DualEncoder&, const DualEncoder&) = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace typodr
