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

#ifndef NLCRF_TESTS_HELPERS_HPP_
#define NLCRF_TESTS_HELPERS_HPP_

#include <cmath>
#include <cstdlib>
#include <span>
#include <vector>

#include "nlcrf/chain_model.hpp"
#include "nlcrf/oracle.hpp"
#include "nlcrf/rng.hpp"

namespace nlcrf::test {

inline ChainModel random_model(const ChainLayout& layout, Rng& rng, double scale = 1.0) {
  ChainModel model(layout);
  for (double& v : model.values()) v = rng.normal(0.0, scale);
  return model;
}

// Feasible, strictly interior point of the local polytope: the Gibbs
// marginals of a random model.
inline MarginalVector random_interior_marginals(const ChainLayout& layout, Rng& rng,
                                                double scale = 1.0) {
  return marginal_oracle(random_model(layout, rng, scale)).marginals;
}

inline Labeling random_labeling(const ChainLayout& layout, Rng& rng) {
  Labeling y(layout.length);
  for (int& v : y) v = rng.uniform_int(layout.num_states);
  return y;
}

// Direct potential sum, written without dot()/sufficient_statistics so tests
// can use it as an independent check on both.
inline double labeling_score(const ChainModel& theta, const Labeling& y) {
  double acc = 0.0;
  for (int i = 0; i < theta.length(); ++i) acc += theta.node(i)[y[i]];
  for (int i = 0; i + 1 < theta.length(); ++i) acc += theta.edge_at(i, y[i], y[i + 1]);
  return acc;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// |a - b| / max(1, |a|, |b|); the relative error convention used by every
// finite-difference check in the suite.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace nlcrf::test

#endif  // NLCRF_TESTS_HELPERS_HPP_
