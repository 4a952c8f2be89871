// Copyright 2026 the nonlocal-crf authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NLCRF_NUMERICS_HPP_
#define NLCRF_NUMERICS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace nlcrf {

inline double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;  // all -inf (empty handled by caller)
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

// In-place exp-and-normalize of a log-weight block; returns log of the
// normalizer (max + log sum). Guarantees the block sums to 1 up to rounding.
inline double softmax_in_place(std::span<double> block) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : block) m = std::max(m, v);
  double sum = 0.0;
  for (double& v : block) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : block) v /= sum;
  return m + std::log(sum);
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

inline double linf_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc = std::max(acc, std::abs(a[i] - b[i]));
  return acc;
}

}  // namespace nlcrf

#endif  // NLCRF_NUMERICS_HPP_
