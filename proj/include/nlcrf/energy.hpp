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

#ifndef NLCRF_ENERGY_HPP_
#define NLCRF_ENERGY_HPP_

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "nlcrf/chain_model.hpp"

namespace nlcrf {

struct EnergyEvaluation {
  double value = 0.0;
  MarginalVector gradient;  // same flat layout as mu
};

/// A differentiable (or subdifferentiable) penalty L_psi(mu) on the marginal
/// vector, added to the negated chain objective. Instances are immutable;
/// learning moves through parameter space with with_psi().
class EnergyFunction {
 public:
  virtual ~EnergyFunction() = default;

  virtual EnergyEvaluation evaluate(const MarginalVector& mu) const = 0;

  /// Number of tunable weights psi.
  virtual int num_psi() const = 0;
  virtual std::vector<double> psi() const = 0;
  /// Same energy with the weights replaced. `psi` must have num_psi() entries.
  virtual std::unique_ptr<EnergyFunction> with_psi(std::span<const double> psi) const = 0;

  /// Ascent direction for the weights of the conditional likelihood
  /// surrogate: component j is
  ///   -(d/dpsi_j grad_mu L_psi(mu))^T residual.
  /// The residual is S(y) minus the current model marginals (these equal mu
  /// once inference has converged; the convenience overload assumes that).
  virtual std::vector<double> psi_grad(const MarginalVector& mu,
                                       std::span<const double> residual) const = 0;

  std::vector<double> psi_grad(const MarginalVector& mu, const SufficientStatistics& s) const {
    std::vector<double> residual(s.values().size());
    for (size_t i = 0; i < residual.size(); ++i) residual[i] = s.values()[i] - mu.values()[i];
    return psi_grad(mu, std::span<const double>(residual));
  }

  virtual bool is_convex() const = 0;
  /// Upper bound on the Lipschitz constant of the gradient, when one exists.
  virtual std::optional<double> smoothness_bound() const = 0;

  /// Whether the weights must stay nonnegative (learners project after each
  /// step when true). Families whose convexity hinges on psi >= 0 say so here.
  virtual bool psi_nonnegative() const { return true; }

  virtual std::unique_ptr<EnergyFunction> clone() const = 0;
};

/// L(mu) = 0; plugging it in reduces every solver to the plain chain oracle.
class ZeroEnergy final : public EnergyFunction {
 public:
  EnergyEvaluation evaluate(const MarginalVector& mu) const override {
    return {0.0, MarginalVector(mu.layout(), 0.0)};
  }
  int num_psi() const override { return 0; }
  std::vector<double> psi() const override { return {}; }
  std::unique_ptr<EnergyFunction> with_psi(std::span<const double>) const override {
    return std::make_unique<ZeroEnergy>();
  }
  using EnergyFunction::psi_grad;
  std::vector<double> psi_grad(const MarginalVector&, std::span<const double>) const override {
    return {};
  }
  bool is_convex() const override { return true; }
  std::optional<double> smoothness_bound() const override { return 0.0; }
  std::unique_ptr<EnergyFunction> clone() const override { return std::make_unique<ZeroEnergy>(); }
};

// One-sided smoothed hinge on the margin z: linear with slope -1 below 0,
// quadratic blend on (0,1), zero at and above 1. C^1 with curvature <= 1.
inline double smoothed_hinge(double z) {
  if (z <= 0.0) return 0.5 - z;
  if (z >= 1.0) return 0.0;
  const double r = 1.0 - z;
  return 0.5 * r * r;
}

inline double smoothed_hinge_derivative(double z) {
  if (z <= 0.0) return -1.0;
  if (z >= 1.0) return 0.0;
  return z - 1.0;
}

}  // namespace nlcrf

#endif  // NLCRF_ENERGY_HPP_
