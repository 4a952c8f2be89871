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

#ifndef NLCRF_EUCLIDEAN_HPP_
#define NLCRF_EUCLIDEAN_HPP_

#include <memory>

#include "nlcrf/projected_inference.hpp"

namespace nlcrf {

/// Euclidean projection onto the local polytope (all blocks on their
/// simplices, edge blocks consistent with their node blocks) by Dykstra's
/// alternating scheme: the affine consistency subspace, then the product of
/// simplices, with the standard correction on the simplex step. Cycles stop
/// once the iterate moves less than kTolerance in max norm, and the simplex
/// pass runs last so block sums are exact.
class LocalPolytopeProjector {
 public:
  static constexpr double kTolerance = 1e-10;
  static constexpr int kMaxCycles = 5000;

  explicit LocalPolytopeProjector(ChainLayout layout);
  ~LocalPolytopeProjector();
  LocalPolytopeProjector(LocalPolytopeProjector&&) noexcept;
  LocalPolytopeProjector& operator=(LocalPolytopeProjector&&) noexcept;

  MarginalVector project(const MarginalVector& point) const;

  const ChainLayout& layout() const { return layout_; }
  int last_cycles() const { return last_cycles_; }

 private:
  struct Impl;  // Eigen factorization of the consistency normal equations
  ChainLayout layout_;
  std::unique_ptr<Impl> impl_;
  mutable int last_cycles_ = 0;
};

/// Projected gradient ascent on the augmented objective with backtracking
/// line search; the measuring stick the oracle-based solvers are compared
/// against. Each trial step costs a full Dykstra projection.
SolveResult euclidean_solve(const ChainModel& theta, const EnergyFunction& energy,
                            const SolverOptions& options);

}  // namespace nlcrf

#endif  // NLCRF_EUCLIDEAN_HPP_
