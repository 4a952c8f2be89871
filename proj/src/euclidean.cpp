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

#include "nlcrf/euclidean.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nlcrf/numerics.hpp"
#include "solve_tracker.hpp"

namespace nlcrf {
namespace {

// Euclidean projection of one block onto the probability simplex
// (Held et al. / Duchi et al. thresholding).
void project_simplex(std::span<double> block) {
  thread_local std::vector<double> sorted;
  sorted.assign(block.begin(), block.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cumulative = 0.0;
  double tau = 0.0;
  int support = 0;
  for (size_t j = 0; j < sorted.size(); ++j) {
    cumulative += sorted[j];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) {
      tau = candidate;
      support = static_cast<int>(j + 1);
    }
  }
  (void)support;
  for (double& v : block) v = std::max(v - tau, 0.0);
}

void project_all_simplices(MarginalVector& mu) {
  const ChainLayout& layout = mu.layout();
  for (int i = 0; i < layout.length; ++i) project_simplex(mu.node(i));
  for (int i = 0; i < layout.num_edges(); ++i) project_simplex(mu.edge(i));
}

}  // namespace

// The consistency constraints A mu = 0 collect, for every edge block, its row
// sums minus the left node block and its column sums minus the right node
// block: 2k(n-1) rows, all independent (a nonzero combination would need the
// per-edge row/col multipliers to be constant and those constants to
// telescope through the shared node blocks down to the unconstrained
// endpoint, forcing all of them to zero). Projection onto the nullspace is
// mu - A^T (A A^T)^{-1} A mu with the normal matrix factored once.
struct LocalPolytopeProjector::Impl {
  Eigen::SparseMatrix<double> a;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> normal;
};

LocalPolytopeProjector::LocalPolytopeProjector(ChainLayout layout)
    : layout_(layout), impl_(std::make_unique<Impl>()) {
  const int k = layout_.num_states;
  const int rows = 2 * k * layout_.num_edges();
  if (rows == 0) return;  // single node: the simplex pass is the projection

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<size_t>(rows) * (k + 1));
  int row = 0;
  for (int i = 0; i < layout_.num_edges(); ++i) {
    for (int a = 0; a < k; ++a, ++row) {
      for (int b = 0; b < k; ++b) triplets.emplace_back(row, layout_.edge_index(i, a, b), 1.0);
      triplets.emplace_back(row, layout_.node_index(i, a), -1.0);
    }
    for (int b = 0; b < k; ++b, ++row) {
      for (int a = 0; a < k; ++a) triplets.emplace_back(row, layout_.edge_index(i, a, b), 1.0);
      triplets.emplace_back(row, layout_.node_index(i + 1, b), -1.0);
    }
  }
  impl_->a.resize(rows, layout_.dim());
  impl_->a.setFromTriplets(triplets.begin(), triplets.end());

  const Eigen::SparseMatrix<double> normal_matrix = impl_->a * impl_->a.transpose();
  impl_->normal.compute(normal_matrix);
  if (impl_->normal.info() != Eigen::Success) {
    throw std::runtime_error("LocalPolytopeProjector: consistency system factorization failed");
  }
}

LocalPolytopeProjector::~LocalPolytopeProjector() = default;
LocalPolytopeProjector::LocalPolytopeProjector(LocalPolytopeProjector&&) noexcept = default;
LocalPolytopeProjector& LocalPolytopeProjector::operator=(LocalPolytopeProjector&&) noexcept =
    default;

MarginalVector LocalPolytopeProjector::project(const MarginalVector& point) const {
  throw_if_dimension_mismatch(layout_, point.layout(), "LocalPolytopeProjector");
  MarginalVector x = point;
  if (layout_.num_edges() == 0) {
    project_all_simplices(x);
    last_cycles_ = 1;
    return x;
  }

  const int dim = static_cast<int>(layout_.dim());
  Eigen::VectorXd v(dim);
  std::vector<double> correction(dim, 0.0);  // Dykstra term for the simplex set
  std::vector<double> previous(dim);

  for (int cycle = 1; cycle <= kMaxCycles; ++cycle) {
    previous.assign(x.values().begin(), x.values().end());

    // Affine step: corrections are unnecessary for a subspace (they lie in
    // its normal space and project away).
    for (int i = 0; i < dim; ++i) v[i] = x.values()[i];
    const Eigen::VectorXd residual = impl_->a * v;
    const Eigen::VectorXd multipliers = impl_->normal.solve(residual);
    const Eigen::VectorXd corrected = v - impl_->a.transpose() * multipliers;

    // Simplex step with the standard Dykstra correction.
    for (int i = 0; i < dim; ++i) x.values()[i] = corrected[i] + correction[i];
    project_all_simplices(x);
    for (int i = 0; i < dim; ++i) correction[i] = corrected[i] + correction[i] - x.values()[i];

    last_cycles_ = cycle;
    if (linf_distance(x.values(), previous) < kTolerance) break;
  }
  return x;
}

SolveResult euclidean_solve(const ChainModel& theta, const EnergyFunction& energy,
                            const SolverOptions& options) {
  const ChainLayout& layout = theta.layout();
  const LocalPolytopeProjector projector(layout);
  internal::SolveTracker tracker(theta, energy, options);

  MarginalVector mu = marginal_oracle(theta).marginals;  // same start as the oracle solvers
  SolveResult result{mu, theta, 0.0, 0, false, 1, {}, {}};

  // Plain projected ascent with a Nesterov extrapolation attempted first and
  // a monotone (function-value restart) safeguard. The count-observation
  // objectives are badly conditioned and the unaccelerated method needs tens
  // of thousands of steps on them. The extrapolated point is used unprojected
  // — only to pick the step direction — so each attempt costs one projection.
  MarginalVector previous = mu;
  double nesterov = 1.0;

  double step = 1.0;
  MarginalVector trial(layout);
  const auto ascent_at = [&](const MarginalVector& base) {
    const MarginalVector point = clamp_interior(base);
    const MarginalVector entropy_grad = bethe_entropy_gradient(point);
    const EnergyEvaluation e = energy.evaluate(point);
    std::vector<double> ascent(layout.dim());
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      ascent[i] = theta.values()[i] + entropy_grad.values()[i] - e.gradient.values()[i];
    }
    return ascent;
  };

  for (int t = 1; t <= options.max_iters; ++t) {
    const double objective_here = objective_value(theta, energy, mu);
    bool advanced = false;
    MarginalVector candidate(layout);

    if (nesterov > 1.0) {
      const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * nesterov * nesterov));
      const double gamma = (nesterov - 1.0) / next;
      MarginalVector extrapolated = mu;
      for (std::size_t i = 0; i < layout.dim(); ++i) {
        extrapolated.values()[i] += gamma * (mu.values()[i] - previous.values()[i]);
      }
      const std::vector<double> ascent = ascent_at(extrapolated);
      for (std::size_t i = 0; i < layout.dim(); ++i) {
        trial.values()[i] = extrapolated.values()[i] + step * ascent[i];
      }
      candidate = projector.project(trial);
      if (objective_value(theta, energy, candidate) >= objective_here) {
        advanced = true;
        nesterov = next;
      } else {
        nesterov = 1.0;  // overshot: restart the momentum sequence
      }
    }

    if (!advanced) {
      const std::vector<double> ascent = ascent_at(mu);
      step = std::min(step * 2.0, 16.0);
      bool accepted = false;
      while (step >= 1e-14) {
        for (std::size_t i = 0; i < layout.dim(); ++i) {
          trial.values()[i] = mu.values()[i] + step * ascent[i];
        }
        candidate = projector.project(trial);
        double along = 0.0;
        for (std::size_t i = 0; i < layout.dim(); ++i) {
          along += ascent[i] * (candidate.values()[i] - mu.values()[i]);
        }
        const double objective_there = objective_value(theta, energy, candidate);
        if (objective_there >= objective_here + 1e-4 * std::max(along, 0.0)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        // No ascent step exists at line-search resolution: stationary.
        result.converged = true;
        break;
      }
      nesterov = 0.5 * (1.0 + std::sqrt(5.0));  // re-arm from t = 1
    }

    const double delta = tracker.record(result, candidate, mu);
    previous = std::move(mu);
    mu = std::move(candidate);
    if (delta < options.tol) {
      result.converged = true;
      break;
    }
  }

  // The variational model that decoding uses; the correction at the final
  // point plays the role the averaged dual gradient plays for the oracle
  // solvers.
  const EnergyEvaluation at_end = energy.evaluate(clamp_interior(mu));
  ChainModel theta_tilde(layout);
  for (std::size_t i = 0; i < layout.dim(); ++i) {
    theta_tilde.values()[i] = theta.values()[i] - at_end.gradient.values()[i];
  }
  result.theta_tilde = std::move(theta_tilde);
  tracker.finish(result, std::move(mu));
  return result;
}

}  // namespace nlcrf
