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

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace typodr {

// Error taxonomy. The CLI maps these onto exit codes.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent files, dangling ids, corrupt checkpoints.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorruptionError : DataError {
  using DataError::DataError;
};

struct IncompatibleError : DataError {
  using DataError::DataError;
};

// Non-finite loss or gradient.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool empty() const { return data.empty(); }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = ascii_lower(c);
  return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\n' || s[j] == '\r')) ++j;
    if (j > i) words.push_back(s.substr(i, j - i));
    i = j;
  }
  return words;
}

// FNV-1a, 64-bit: h = 0xcbf29ce484222325; for each byte: h ^= byte; h *= 0x100000001b3.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Identifier order used for deterministic tie-breaking: purely numeric ids
// compare by value, everything else lexicographically, numeric before text.
inline bool id_less(std::string_view a, std::string_view b) {
  auto numeric = [](std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
      if (c < '0' || c > '9') return false;
    return true;
  };
  const bool na = numeric(a), nb = numeric(b);
  if (na && nb) {
    auto strip = [](std::string_view s) {
      std::size_t i = 0;
      while (i + 1 < s.size() && s[i] == '0') ++i;
      return s.substr(i);
    };
    auto sa = strip(a), sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
    return a < b;
  }
  if (na != nb) return na;
  return a < b;
}

}  // namespace typodr
