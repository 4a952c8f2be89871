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

#ifndef NLCRF_ORACLE_HPP_
#define NLCRF_ORACLE_HPP_

#include "nlcrf/chain_model.hpp"

namespace nlcrf {

struct OracleResult {
  MarginalVector marginals;
  double log_partition = 0.0;
};

/// Exact node and edge marginals of the chain Gibbs distribution by
/// forward-backward message passing in log space. Every output block is
/// normalized with a softmax, so block sums are 1 up to rounding and the
/// result maximizes <theta, mu> + H_B(mu) over the local polytope.
OracleResult marginal_oracle(const ChainModel& theta);

double log_partition(const ChainModel& theta);

/// Highest-scoring labeling; every argmax breaks ties toward the smaller
/// label index, so the zero model decodes to all zeros.
Labeling map_decode(const ChainModel& theta);

/// Bethe entropy of locally consistent chain marginals:
/// sum of edge entropies minus (degree-1)-weighted node entropies.
/// Entries equal to zero contribute zero.
double bethe_entropy(const MarginalVector& mu);

inline constexpr double kInteriorThreshold = 1e-12;

/// Gradient of bethe_entropy. Requires every entry >= kInteriorThreshold
/// (throws std::domain_error otherwise): the gradient grows without bound
/// at the boundary.
MarginalVector bethe_entropy_gradient(const MarginalVector& mu);

/// Copy of mu with every entry clipped into [floor, 1] and each block
/// renormalized to sum 1. Gradient evaluation points are run through this
/// so near-boundary iterates cannot blow up the entropy gradient.
MarginalVector clamp_interior(const MarginalVector& mu, double floor = kInteriorThreshold);

// Plain single-threaded implementations of the kernels above. The default
// versions parallelize independent entries with OpenMP and are checked
// against these in the tests and timed against them in the benchmark tool.
namespace reference {
OracleResult marginal_oracle(const ChainModel& theta);
double bethe_entropy(const MarginalVector& mu);
MarginalVector bethe_entropy_gradient(const MarginalVector& mu);
}  // namespace reference

}  // namespace nlcrf

#endif  // NLCRF_ORACLE_HPP_
