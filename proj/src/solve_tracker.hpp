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

#ifndef NLCRF_SRC_SOLVE_TRACKER_HPP_
#define NLCRF_SRC_SOLVE_TRACKER_HPP_

#include <chrono>

#include "nlcrf/projected_inference.hpp"

namespace nlcrf::internal {

// Shared per-iteration bookkeeping for the solvers: running average of the
// iterates, trace records, and the convergence delta.
class SolveTracker {
 public:
  SolveTracker(const ChainModel& theta, const EnergyFunction& energy,
               const SolverOptions& options);

  // Accounts for one produced iterate and returns the block-normalized L1
  // change against the previous one.
  double record(SolveResult& result, const MarginalVector& iterate,
                const MarginalVector& previous);

  // Fills marginals (last iterate or running average), iterations, objective.
  void finish(SolveResult& result, MarginalVector last);

  int count() const { return count_; }

 private:
  const ChainModel& theta_;
  const EnergyFunction& energy_;
  const SolverOptions& options_;
  MarginalVector average_;
  std::chrono::steady_clock::time_point start_;
  int count_ = 0;
};

}  // namespace nlcrf::internal

#endif  // NLCRF_SRC_SOLVE_TRACKER_HPP_
