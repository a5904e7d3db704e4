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
#include <limits>
#include <span>
#include <string>

#include "typodr/common.hpp"

namespace typodr {

// Regularized incomplete beta I_x(a, b) by the continued fraction
//   I_x(a,b) = x^a (1-x)^b / (a B(a,b)) * 1/(1+ d1/(1+ d2/(1+ ...)))
//   d_{2m+1} = -(a+m)(a+b+m) x / ((a+2m)(a+2m+1))
//   d_{2m}   = m(b-m) x / ((a+2m-1)(a+2m))
// evaluated with the modified Lentz method. For x > (a+1)/(a+b+2) the
// symmetry I_x(a,b) = 1 - I_{1-x}(b,a) keeps the fraction in its fast region.
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidInput("incomplete beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);

  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 100000; ++m) {
    const double md = m;
    double num = md * (b - md) * x / ((a + 2 * md - 1.0) * (a + 2 * md));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + md) * (a + b + md) * x / ((a + 2 * md) * (a + 2 * md + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < eps) break;
  }
  return std::exp(log_front) * f / a;
}

// Two-tailed p-value of Student's t with `df` degrees of freedom:
//   p = I_{df/(df+t^2)}(df/2, 1/2)
inline double student_t_two_tailed_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool significant = false;
  // Differences were identical and nonzero: t is infinite and p is 0.
  bool degenerate = false;
  std::size_t n = 0;
  double mean_difference = 0.0;
};

// Paired two-tailed t-test on a - b. Bonferroni: significant iff
// p < 0.05 / num_comparisons.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                                 std::size_t num_comparisons = 1, double alpha = 0.05) {
  if (a.size() != b.size())
    throw InvalidInput("paired_t_test: samples differ in length (" + std::to_string(a.size()) +
                       " vs " + std::to_string(b.size()) + ")");
  if (a.size() < 2) throw InvalidInput("paired_t_test: need at least 2 pairs");
  if (num_comparisons < 1) throw InvalidInput("paired_t_test: num_comparisons must be >= 1");
  TTestResult r;
  r.n = a.size();
  const double n = static_cast<double>(r.n);
  double mean = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  bool all_equal = true;
  const double first = a[0] - b[0];
  for (std::size_t i = 0; i < r.n; ++i) {
    const double d = a[i] - b[i];
    if (d != first) all_equal = false;
    ss += (d - mean) * (d - mean);
  }
  r.mean_difference = mean;
  if (all_equal) {
    if (first == 0.0) return r;  // t = 0, p = 1
    r.degenerate = true;
    r.t = first > 0 ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    r.significant = true;
    return r;
  }
  const double se = std::sqrt(ss / (n - 1.0) / n);
  r.t = mean / se;
  r.p = student_t_two_tailed_p(r.t, n - 1.0);
  r.significant = r.p < alpha / static_cast<double>(num_comparisons);
  return r;
}

}  // namespace typodr
