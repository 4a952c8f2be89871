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

#include "nlcrf/projected_inference.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "nlcrf/euclidean.hpp"
#include "nlcrf/numerics.hpp"
#include "solve_tracker.hpp"

namespace nlcrf {
namespace {

using Clock = std::chrono::steady_clock;

double block_normalized_l1(const MarginalVector& a, const MarginalVector& b) {
  return l1_distance(a.values(), b.values()) / a.layout().num_blocks();
}

}  // namespace

namespace internal {

SolveTracker::SolveTracker(const ChainModel& theta, const EnergyFunction& energy,
                           const SolverOptions& options)
    : theta_(theta),
      energy_(energy),
      options_(options),
      average_(theta.layout(), 0.0),
      start_(Clock::now()) {}

double SolveTracker::record(SolveResult& result, const MarginalVector& iterate,
                            const MarginalVector& previous) {
  ++count_;
  for (size_t i = 0; i < average_.values().size(); ++i) {
    average_.values()[i] += (iterate.values()[i] - average_.values()[i]) / count_;
  }
  const double delta = block_normalized_l1(iterate, previous);
  if (options_.record_trace) {
    IterationRecord rec;
    rec.iteration = count_;
    rec.objective = objective_value(theta_, energy_, iterate);
    rec.objective_avg = objective_value(theta_, energy_, average_);
    rec.delta = delta;
    const MarginalCheck check = validate_marginals(iterate);
    rec.max_violation = std::max(check.max_simplex_violation, check.max_consistency_violation);
    rec.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    result.trace.push_back(rec);
  }
  if (options_.record_iterates) result.iterates.push_back(iterate);
  return delta;
}

void SolveTracker::finish(SolveResult& result, MarginalVector last) {
  result.iterations = count_;
  result.marginals = (options_.average_iterates && count_ > 0) ? average_ : std::move(last);
  result.objective = objective_value(theta_, energy_, result.marginals);
}

}  // namespace internal

std::string solver_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::kRda:
      return "rda";
    case SolverKind::kMd:
      return "md";
    case SolverKind::kAccRda:
      return "acc-rda";
    case SolverKind::kEuclidean:
      return "euclidean";
  }
  throw std::logic_error("solver_name: unknown kind");
}

SolverKind parse_solver(const std::string& name) {
  if (name == "rda") return SolverKind::kRda;
  if (name == "md") return SolverKind::kMd;
  if (name == "acc-rda") return SolverKind::kAccRda;
  if (name == "euclidean") return SolverKind::kEuclidean;
  throw std::invalid_argument("unknown solver '" + name + "' (rda | md | acc-rda | euclidean)");
}

double objective_value(const ChainModel& theta, const EnergyFunction& energy,
                       const MarginalVector& mu) {
  return dot(theta, mu) + bethe_entropy(mu) - energy.evaluate(mu).value;
}

double md_learning_rate(const ChainLayout& layout, int t) {
  const double span = 2.0 * layout.length - 1.0;
  const double lambda = 0.5 / (span * span);  // strong convexity of -H_B
  return 1.0 / (lambda * t);
}

namespace {

SolveResult rda_solve(const ChainModel& theta, const EnergyFunction& energy,
                      const SolverOptions& options) {
  if (options.beta < 0.0) throw std::invalid_argument("rda: beta must be >= 0");
  const ChainLayout& layout = theta.layout();
  internal::SolveTracker tracker(theta, energy, options);

  MarginalVector mu = marginal_oracle(theta).marginals;  // prox-center
  SolveResult result{mu, theta, 0.0, 0, false, 1, {}, {}};
  std::vector<double> gbar(layout.dim(), 0.0);

  for (int t = 1; t <= options.max_iters; ++t) {
    const EnergyEvaluation e = energy.evaluate(mu);
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      gbar[i] = ((t - 1.0) * gbar[i] + e.gradient.values()[i]) / t;
    }
    const double scale = t / (t + options.beta);
    ChainModel theta_t(layout);
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      theta_t.values()[i] = theta.values()[i] - scale * gbar[i];
    }
    OracleResult o = marginal_oracle(theta_t);
    ++result.oracle_calls;
    const double delta = tracker.record(result, o.marginals, mu);
    mu = std::move(o.marginals);
    result.theta_tilde = std::move(theta_t);
    if (delta < options.tol) {
      result.converged = true;
      break;
    }
  }
  tracker.finish(result, std::move(mu));
  return result;
}

SolveResult md_solve(const ChainModel& theta, const EnergyFunction& energy,
                     const SolverOptions& options) {
  const ChainLayout& layout = theta.layout();
  internal::SolveTracker tracker(theta, energy, options);

  MarginalVector mu = marginal_oracle(theta).marginals;
  SolveResult result{mu, theta, 0.0, 0, false, 1, {}, {}};

  for (int t = 1; t <= options.max_iters; ++t) {
    const double eta = md_learning_rate(layout, t);
    const MarginalVector point = clamp_interior(mu);
    const MarginalVector entropy_grad = bethe_entropy_gradient(point);
    const EnergyEvaluation e = energy.evaluate(point);
    ChainModel arg(layout);
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      const double g = entropy_grad.values()[i] + eta * e.gradient.values()[i];
      arg.values()[i] = (eta * theta.values()[i] - g) / (1.0 + eta);
    }
    OracleResult o = marginal_oracle(arg);
    ++result.oracle_calls;
    const double delta = tracker.record(result, o.marginals, mu);
    mu = std::move(o.marginals);
    result.theta_tilde = std::move(arg);
    if (delta < options.tol) {
      result.converged = true;
      break;
    }
  }
  tracker.finish(result, std::move(mu));
  return result;
}

SolveResult acc_rda_solve(const ChainModel& theta, const EnergyFunction& energy,
                          const SolverOptions& options) {
  double lipschitz = options.smoothness;
  if (lipschitz < 0.0) {
    const std::optional<double> bound = energy.smoothness_bound();
    if (!bound) {
      throw std::invalid_argument(
          "acc-rda: the energy has no smoothness bound; pass one explicitly");
    }
    lipschitz = *bound;
  }

  const ChainLayout& layout = theta.layout();
  internal::SolveTracker tracker(theta, energy, options);

  MarginalVector mu = marginal_oracle(theta).marginals;
  MarginalVector nu = mu;
  SolveResult result{mu, theta, 0.0, 0, false, 1, {}, {}};
  std::vector<double> gbar(layout.dim(), 0.0);
  MarginalVector u(layout);

  for (int t = 1; t <= options.max_iters; ++t) {
    const double c = 2.0 / (t + 1.0);
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      u.values()[i] = (1.0 - c) * mu.values()[i] + c * nu.values()[i];
    }
    const EnergyEvaluation e = energy.evaluate(u);
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      gbar[i] = (1.0 - c) * gbar[i] + c * e.gradient.values()[i];
    }
    const double tt = static_cast<double>(t) * (t + 1.0);
    const double scale = tt / (4.0 * lipschitz + tt);
    ChainModel arg(layout);
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      arg.values()[i] = scale * (theta.values()[i] - gbar[i]);
    }
    OracleResult o = marginal_oracle(arg);
    ++result.oracle_calls;
    MarginalVector mu_next(layout);
    for (std::size_t i = 0; i < layout.dim(); ++i) {
      mu_next.values()[i] = (1.0 - c) * mu.values()[i] + c * o.marginals.values()[i];
    }
    const double delta = tracker.record(result, mu_next, mu);
    mu = std::move(mu_next);
    nu = std::move(o.marginals);
    result.theta_tilde = std::move(arg);
    if (delta < options.tol) {
      result.converged = true;
      break;
    }
  }
  tracker.finish(result, std::move(mu));
  return result;
}

}  // namespace

SolveResult solve(const ChainModel& theta, const EnergyFunction& energy,
                  const SolverOptions& options) {
  if (!theta.all_finite()) throw std::invalid_argument("solve: potentials must be finite");
  if (options.max_iters < 0) throw std::invalid_argument("solve: max_iters must be >= 0");
  switch (options.kind) {
    case SolverKind::kRda:
      return rda_solve(theta, energy, options);
    case SolverKind::kMd:
      return md_solve(theta, energy, options);
    case SolverKind::kAccRda:
      return acc_rda_solve(theta, energy, options);
    case SolverKind::kEuclidean:
      return euclidean_solve(theta, energy, options);
  }
  throw std::logic_error("solve: unknown solver kind");
}

Labeling map_predict(const ChainModel& theta, const EnergyFunction& energy,
                     const SolverOptions& options) {
  return map_decode(solve(theta, energy, options).theta_tilde);
}

}  // namespace nlcrf
