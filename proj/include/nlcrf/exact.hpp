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

#ifndef NLCRF_EXACT_HPP_
#define NLCRF_EXACT_HPP_

#include <cstdint>
#include <functional>

#include "nlcrf/chain_model.hpp"
#include "nlcrf/energy.hpp"

namespace nlcrf {

/// Enumeration is refused above this many labelings.
inline constexpr double kMaxEnumeration = 1e6;

bool enumeration_feasible(const ChainLayout& layout);

/// Calls fn once per labeling, in lexicographic order.
void for_each_labeling(const ChainLayout& layout, const std::function<void(const Labeling&)>& fn);

/// Explicit distribution over all k^n labelings, lexicographic order.
struct JointTable {
  ChainLayout layout;
  std::vector<double> probabilities;
};

/// The exact Gibbs distribution of the chain.
JointTable enumerate_distribution(const ChainModel& theta);

/// E_q[S(y)] by direct summation.
MarginalVector exact_marginals(const JointTable& table);

/// Gibbs marginals by summing S(y) over all k^n labelings.
MarginalVector exact_marginals(const ChainModel& theta);

double exact_log_partition(const ChainModel& theta);

/// Argmax of <theta, S(y)>; ties toward the lexicographically smallest
/// labeling.
Labeling exact_map(const ChainModel& theta);

struct ExactSolveOptions {
  int max_iters = 50000;
  // Stop when the L1 distance between the distribution and one fixed-point
  // update of it falls below this.
  double tol = 1e-12;
  // Extra random initializations; only the best stationary point is kept.
  // Matters for non-convex energies with several basins.
  int restarts = 20;
  uint64_t seed = 0;
};

struct ExactSolveResult {
  MarginalVector marginals;
  double objective = 0.0;  // <theta, mu> + H_B(mu) - L(mu)
  int iterations = 0;      // of the returned run
  bool converged = false;
};

/// Maximizes <theta, mu(q)> + H(q) - L(mu(q)) over the full distribution
/// simplex by multiplicative (entropic mirror) ascent with a backtracking
/// step, restarted from several initializations. Stationary points are
/// chain-Gibbs distributions, so the entropy terms agree there and the
/// result is directly comparable with the polytope solvers. Ground truth for
/// small problems; cost per sweep is O(k^n * n).
ExactSolveResult solve_augmented_exact(const ChainModel& theta, const EnergyFunction& energy,
                                       const ExactSolveOptions& options = {});

}  // namespace nlcrf

#endif  // NLCRF_EXACT_HPP_
