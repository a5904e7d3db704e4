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
#include <string>
#include <vector>

#include "typodr/encoder.hpp"
#include "typodr/losses.hpp"
#include "typodr/rng.hpp"
#include "typodr/trainer.hpp"

namespace typodr {

// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero
// analytically from being judged on finite-difference round-off alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / scale;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t params_checked = 0;
};

// Compares backprop parameter gradients with central differences of the batch
// loss. Self-teaching targets stay pinned at the unperturbed model's scores,
// matching how they are treated as constants during training.
inline GradCheckReport check_model_gradients(const DualEncoder& model, const BatchTexts& bt,
                                             const MethodConfig& method, std::size_t variant,
                                             double step = 1e-5) {
  const bool pairs = uses_query_pairs(method.method);
  const Matrix teacher = forward_batch(model, bt, pairs).scores.qp;
  auto analytic = batch_step(model, bt, method, variant, &teacher).grads;

  GradCheckReport rep;
  DualEncoder probe = model;
  auto loss_at = [&](const DualEncoder& m) {
    return method_loss(method, forward_batch(m, bt, pairs).scores, variant, &teacher).loss;
  };
  for (std::size_t t = 0; t < probe.towers.size(); ++t) {
    auto params = param_groups(probe.towers[t], t);
    auto grads = param_groups(analytic.towers[t], t);
    for (std::size_t gi = 0; gi < params.size(); ++gi) {
      for (std::size_t i = 0; i < params[gi].values.size(); ++i) {
        double& x = params[gi].values[i];
        const double saved = x;
        x = saved + step;
        const double up = loss_at(probe);
        x = saved - step;
        const double down = loss_at(probe);
        x = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double err = relative_error(grads[gi].values[i], numeric);
        ++rep.params_checked;
        if (err > rep.max_rel_error) {
          rep.max_rel_error = err;
          rep.worst_param = params[gi].name + "[" + std::to_string(i) + "]";
        }
      }
    }
  }
  return rep;
}

// A small random batch over pseudo-word texts for gradient checks.
inline BatchTexts random_check_batch(SplitMix64& rng, std::size_t queries = 3,
                                     std::size_t negatives_per_query = 1, std::size_t k = 2) {
  static constexpr std::string_view syll[] = {"ka", "lo", "mi", "ne", "su", "ta", "ro", "vi"};
  auto word = [&] {
    std::string w;
    const std::size_t n = 2 + rng.uniform_index(2);
    for (std::size_t i = 0; i < n; ++i) w += syll[rng.uniform_index(std::size(syll))];
    return w;
  };
  auto text = [&](std::size_t words) {
    std::string t;
    for (std::size_t i = 0; i < words; ++i) {
      if (i) t.push_back(' ');
      t += word();
    }
    return t;
  };
  BatchTexts bt;
  for (std::size_t i = 0; i < queries; ++i) {
    bt.queries.push_back(text(2));
    AugmentationPolicy p;
    p.k = k;
    p.seed = rng.next();
    bt.typoed.push_back(generate_variants(bt.queries.back(), p).variants);
    bt.positive_index.push_back(bt.passages.size());
    for (std::size_t j = 0; j < 1 + negatives_per_query; ++j) {
      bt.passage_ids.push_back(std::to_string(bt.passages.size()));
      bt.passages.push_back(text(4));
    }
  }
  return bt;
}

// Tiny random model: embed_dim 4, 32 buckets, O(1) embedding entries.
inline DualEncoder random_check_model(std::uint64_t seed, bool shared = true) {
  EncoderConfig cfg;
  cfg.embed_dim = 4;
  cfg.num_buckets = 32;
  cfg.shared_weights = shared;
  DualEncoder m{cfg, {}};
  SplitMix64 rng(seed);
  for (std::size_t t = 0; t < (shared ? 1u : 2u); ++t) {
    auto p = EncoderParams::random(cfg, rng, 1.0);
    for (auto& b : p.projection_bias) b = 0.3 * rng.normal();
    m.towers.push_back(std::move(p));
  }
  return m;
}

struct MethodGradCheck {
  Method method;
  double max_rel_error = 0.0;
  std::string worst_param;
};

// End-to-end gradient check of one method over `batches` random batches.
inline MethodGradCheck gradcheck_method(Method method, std::uint64_t seed, std::size_t batches = 20,
                                        bool shared = true) {
  MethodGradCheck out{method, 0.0, {}};
  for (std::size_t b = 0; b < batches; ++b) {
    SplitMix64 rng(derive_seed(seed, {static_cast<std::uint64_t>(method), b}));
    MethodConfig cfg;
    cfg.method = method;
    cfg.k = 2;
    cfg.w1 = 0.7;
    cfg.w2 = 0.3;
    cfg.w = 0.6;
    cfg.beta = 0.4;
    cfg.gamma = 0.3;
    cfg.sigma = 0.6;
    const auto model = random_check_model(rng.next(), shared);
    const auto bt = random_check_batch(rng, 3, 1, cfg.k);
    const auto rep = check_model_gradients(model, bt, cfg, b % cfg.k);
    if (rep.max_rel_error > out.max_rel_error) {
      out.max_rel_error = rep.max_rel_error;
      out.worst_param = rep.worst_param + " (batch " + std::to_string(b) + ")";
    }
  }
  return out;
}

}  // namespace typodr
