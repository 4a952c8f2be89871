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

#ifndef NLCRF_PROJECTED_INFERENCE_HPP_
#define NLCRF_PROJECTED_INFERENCE_HPP_

#include <string>
#include <vector>

#include "nlcrf/energy.hpp"
#include "nlcrf/oracle.hpp"

namespace nlcrf {

enum class SolverKind {
  kRda,        // dual averaging against the entropy regularizer
  kMd,         // mirror descent; robust default for non-convex energies
  kAccRda,     // accelerated variant, needs a smoothness bound
  kEuclidean,  // projected gradient ascent baseline (Dykstra projections)
};

std::string solver_name(SolverKind kind);
SolverKind parse_solver(const std::string& name);  // rda | md | acc-rda | euclidean

struct SolverOptions {
  SolverKind kind = SolverKind::kMd;
  int max_iters = 500;
  // Converged when the L1 change between consecutive iterates, divided by
  // the number of blocks (2n-1), drops below this.
  double tol = 1e-6;
  // RDA: the constant beta_t >= 0; 0 needs no tuning thanks to the strongly
  // convex regularizer.
  double beta = 0.0;
  // Report the running average of the iterates instead of the last one.
  bool average_iterates = false;
  // Accelerated RDA: gradient Lipschitz constant; negative means take the
  // energy's own bound (and fail if it has none).
  double smoothness = -1.0;
  bool record_trace = false;       // per-iteration scalars
  bool record_iterates = false;    // additionally keep every reported iterate
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;      // augmented objective at the iterate
  double objective_avg = 0.0;  // same, at the running average of iterates
  double delta = 0.0;          // block-normalized L1 change vs previous iterate
  double max_violation = 0.0;  // worst simplex/consistency violation of the iterate
  double elapsed_seconds = 0.0;
};

struct SolveResult {
  MarginalVector marginals;  // last iterate, or the average if requested
  // Parameters of the variational chain MRF: the argument of the final
  // oracle call. Decoding a single output goes through this model, never
  // through per-node argmax of the marginals.
  ChainModel theta_tilde;
  double objective = 0.0;  // augmented objective at `marginals`
  int iterations = 0;
  bool converged = false;
  int oracle_calls = 0;
  std::vector<IterationRecord> trace;
  std::vector<MarginalVector> iterates;
};

/// <theta, mu> + H_B(mu) - L(mu), the quantity all four solvers maximize
/// over the local polytope.
double objective_value(const ChainModel& theta, const EnergyFunction& energy,
                       const MarginalVector& mu);

/// Mirror-descent learning rate 1/(lambda*t) with lambda the strong
/// convexity modulus of the negated entropy, (1/2)(2n-1)^-2.
double md_learning_rate(const ChainLayout& layout, int t);

SolveResult solve(const ChainModel& theta, const EnergyFunction& energy,
                  const SolverOptions& options = {});

/// Runs solve() and decodes the variational model it returns.
Labeling map_predict(const ChainModel& theta, const EnergyFunction& energy,
                     const SolverOptions& options = {});

}  // namespace nlcrf

#endif  // NLCRF_PROJECTED_INFERENCE_HPP_
